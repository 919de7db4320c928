//! Monte Carlo campaigns, trajectory dumps, simulator-inaccuracy models and
//! scenario presets behind the `intercept` command-line tool.

pub mod campaign;
pub mod error;
pub mod inaccuracy;
pub mod presets;
pub mod trajectory;

pub use campaign::{run_campaign, CampaignConfig, CampaignStats, ControllerSpec};
pub use error::{HarnessError, Result};
