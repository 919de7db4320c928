//! Missile physical model: thruster layout, commanded force and torque, the
//! ignition lag, and fuel-dependent mass properties.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mathkit::{Mat3, RngStream, Vec3};

/// Reference gravity used to convert specific impulse into mass flow.
pub const G_REF: f64 = 9.81;
pub const NUM_THRUSTERS: usize = 16;
pub const NUM_GROUPS: usize = 10;
/// Groups `0..4` are the divert thrusters; `4..10` are attitude pairs.
pub const NUM_DIVERT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrusterSpec {
    /// Body-frame unit vector of the force produced when firing.
    pub direction: Vec3,
    /// Body-frame point of application, m.
    pub location: Vec3,
    /// N.
    pub max_thrust: f64,
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Cylinder radius, m.
    pub radius: f64,
    /// Cylinder length along body x, m.
    pub length: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { radius: 0.25, length: 1.0 }
    }
}

/// Thruster table of the reference interceptor.
///
/// Rows 1-4 are 5000 N divert thrusters mapped to groups 0-3. Rows 5-16 are
/// 125 N attitude thrusters fired in consecutive pairs, giving groups
/// 4..=9 with torques −x, +x, +y, −y, −z, +z.
pub fn default_thrusters(geometry: &Geometry) -> Vec<ThrusterSpec> {
    let r = geometry.radius;
    let h2 = geometry.length / 2.0;
    let divert = 5000.0;
    let acs = 125.0;
    #[rustfmt::skip]
    let rows: [([f64; 3], [f64; 3], f64); NUM_THRUSTERS] = [
        ([0.0, -1.0, 0.0], [0.0, -0.25, 0.0], divert),
        ([0.0, 1.0, 0.0], [0.0, 0.25, 0.0], divert),
        ([0.0, 0.0, 1.0], [0.0, 0.0, 0.25], divert),
        ([0.0, 0.0, -1.0], [0.0, 0.0, -0.25], divert),
        ([0.0, 0.0, 1.0], [0.0, -r, 0.0], acs),
        ([0.0, 0.0, -1.0], [0.0, r, 0.0], acs),
        ([0.0, -1.0, 0.0], [0.0, 0.0, r], acs),
        ([0.0, 1.0, 0.0], [0.0, 0.0, -r], acs),
        ([0.0, 0.0, -1.0], [h2, 0.0, -r], acs),
        ([0.0, 0.0, 1.0], [-h2, 0.0, r], acs),
        ([0.0, 0.0, 1.0], [h2, 0.0, r], acs),
        ([0.0, 0.0, -1.0], [-h2, 0.0, -r], acs),
        ([0.0, -1.0, 0.0], [h2, -r, 0.0], acs),
        ([0.0, 1.0, 0.0], [-h2, r, 0.0], acs),
        ([0.0, 1.0, 0.0], [h2, r, 0.0], acs),
        ([0.0, -1.0, 0.0], [-h2, -r, 0.0], acs),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (d, l, t))| ThrusterSpec {
            direction: Vec3::from(*d),
            location: Vec3::from(*l),
            max_thrust: *t,
            group: if i < NUM_DIVERT { i } else { NUM_DIVERT + (i - NUM_DIVERT) / 2 },
        })
        .collect()
}

/// Checks a thruster table and renormalizes its direction vectors.
pub fn validate_thrusters(mut table: Vec<ThrusterSpec>) -> Result<Vec<ThrusterSpec>> {
    if table.len() != NUM_THRUSTERS {
        return Err(SimError::ConfigFault(format!(
            "thruster table has {} rows, expected {NUM_THRUSTERS}",
            table.len()
        )));
    }
    for (i, t) in table.iter_mut().enumerate() {
        let n = t.direction.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(SimError::ConfigFault(format!("thruster {}: direction norm {n}", i + 1)));
        }
        t.direction /= n;
        if t.group >= NUM_GROUPS {
            return Err(SimError::ConfigFault(format!("thruster {}: group {}", i + 1, t.group)));
        }
        if !(t.max_thrust >= 0.0) || !t.location.iter().all(|v| v.is_finite()) {
            return Err(SimError::ConfigFault(format!("thruster {}: invalid thrust/location", i + 1)));
        }
    }
    Ok(table)
}

/// Reads a JSON array of 16 thruster rows.
pub fn load_thrusters(path: &Path) -> Result<Vec<ThrusterSpec>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::ConfigFault(format!("{}: {e}", path.display())))?;
    let table: Vec<ThrusterSpec> = serde_json::from_str(&text)
        .map_err(|e| SimError::ConfigFault(format!("{}: {e}", path.display())))?;
    validate_thrusters(table)
}

/// Airframe constants shared by every episode of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirframeConfig {
    pub geometry: Geometry,
    /// kg.
    pub dry_mass: f64,
    /// Fuel at the start of homing, kg.
    pub fuel_capacity: f64,
    /// Specific impulse, s. The default is calibrated so the PN benchmark
    /// burns about 8 kg on average.
    pub isp: f64,
    pub thrusters: Vec<ThrusterSpec>,
}

impl Default for AirframeConfig {
    fn default() -> Self {
        let geometry = Geometry::default();
        Self {
            geometry,
            dry_mass: 10.0,
            fuel_capacity: 25.0,
            isp: 125.0,
            thrusters: default_thrusters(&geometry),
        }
    }
}

impl AirframeConfig {
    pub fn wet_mass(&self) -> f64 {
        self.dry_mass + self.fuel_capacity
    }
}

/// Solid-cylinder inertia about the body axes, kg·m².
pub fn nominal_inertia(mass: f64, radius: f64, length: f64) -> Mat3 {
    let axial = radius * radius / 2.0;
    let transverse = (3.0 * radius * radius + length * length) / 12.0;
    Mat3::from_diagonal(&Vec3::new(axial, transverse, transverse)) * mass
}

/// Episode-level inertia model: nominal tensor with scaled diagonal and
/// fixed off-diagonal terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertiaModel {
    pub diagonal_scale: Vec3,
    /// (xy, xz, yz) products of inertia, kg·m².
    pub off_diagonal: Vec3,
}

impl Default for InertiaModel {
    fn default() -> Self {
        Self { diagonal_scale: Vec3::repeat(1.0), off_diagonal: Vec3::zeros() }
    }
}

impl InertiaModel {
    pub fn tensor(&self, mass: f64, geometry: &Geometry) -> Mat3 {
        let mut j = nominal_inertia(mass, geometry.radius, geometry.length);
        for i in 0..3 {
            j[(i, i)] *= self.diagonal_scale[i];
        }
        let [xy, xz, yz] = [self.off_diagonal.x, self.off_diagonal.y, self.off_diagonal.z];
        j[(0, 1)] = xy;
        j[(1, 0)] = xy;
        j[(0, 2)] = xz;
        j[(2, 0)] = xz;
        j[(1, 2)] = yz;
        j[(2, 1)] = yz;
        j
    }
}

pub fn is_positive_definite(m: &Mat3) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0) && m.cholesky().is_some()
}

/// Half-widths of the center-of-mass box for a fraction of the airframe
/// dimensions: `(b·h/2, b·r, b·r)`.
pub fn com_bounds(bound_fraction: f64, geometry: &Geometry) -> Vec3 {
    Vec3::new(
        bound_fraction * geometry.length / 2.0,
        bound_fraction * geometry.radius,
        bound_fraction * geometry.radius,
    )
}

/// Center of mass drifting linearly toward `offset` as fuel is consumed.
pub fn com_fuel_drift(offset: &Vec3, fuel_used: f64, fuel_capacity: f64) -> Result<Vec3> {
    if fuel_capacity == 0.0 {
        return Err(SimError::InvalidArgument("fuel capacity is zero".into()));
    }
    Ok(offset * (fuel_used / fuel_capacity))
}

/// Uniform random center of mass inside the box set by `bound_fraction`.
pub fn com_slosh(rng: &mut RngStream, bound_fraction: f64, geometry: &Geometry) -> Vec3 {
    let b = com_bounds(bound_fraction, geometry);
    Vec3::new(rng.uniform(-b.x, b.x), rng.uniform(-b.y, b.y), rng.uniform(-b.z, b.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ComModel {
    /// `r_com(t) = offset · fuel_used / capacity`.
    FuelDrift { offset: Vec3 },
    /// Redrawn uniformly every simulation step.
    Slosh { bound_fraction: f64 },
}

impl ComModel {
    pub fn offset_direction(&self) -> Vec3 {
        match self {
            ComModel::FuelDrift { offset } => *offset,
            ComModel::Slosh { .. } => Vec3::zeros(),
        }
    }

    pub fn evaluate(
        &self,
        fuel_used: f64,
        airframe: &AirframeConfig,
        rng: &mut RngStream,
    ) -> Result<Vec3> {
        match self {
            ComModel::FuelDrift { offset } => {
                com_fuel_drift(offset, fuel_used, airframe.fuel_capacity)
            }
            ComModel::Slosh { bound_fraction } => {
                Ok(com_slosh(rng, *bound_fraction, &airframe.geometry))
            }
        }
    }
}

/// Ten on/off group commands: four divert thrusters then six attitude pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCommand(pub [bool; NUM_GROUPS]);

impl ActionCommand {
    pub const NONE: ActionCommand = ActionCommand([false; NUM_GROUPS]);

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut out = [false; NUM_GROUPS];
        for (o, b) in out.iter_mut().zip(bits) {
            *o = *b != 0;
        }
        Self(out)
    }

    pub fn bits(&self) -> [u8; NUM_GROUPS] {
        self.0.map(u8::from)
    }

    pub fn is_set(&self, group: usize) -> bool {
        self.0[group]
    }

    /// Number of attitude groups asserted.
    pub fn attitude_count(&self) -> usize {
        self.0[NUM_DIVERT..].iter().filter(|b| **b).count()
    }

    /// Per-thruster commanded thrust, N.
    pub fn thrust_command(&self, thrusters: &[ThrusterSpec]) -> [f64; NUM_THRUSTERS] {
        let mut out = [0.0; NUM_THRUSTERS];
        for (o, t) in out.iter_mut().zip(thrusters) {
            if self.0[t.group] {
                *o = t.max_thrust;
            }
        }
        out
    }

    /// Compact `0101...` rendering used in trajectory records.
    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }
}

/// Body force and torque of the thrusters in `cmd` about `com`.
pub fn command_force_torque(
    cmd: &ActionCommand,
    com: &Vec3,
    thrusters: &[ThrusterSpec],
) -> (Vec3, Vec3) {
    force_torque_from_thrust(&cmd.thrust_command(thrusters), com, thrusters)
}

pub fn force_torque_from_thrust(
    thrust: &[f64; NUM_THRUSTERS],
    com: &Vec3,
    thrusters: &[ThrusterSpec],
) -> (Vec3, Vec3) {
    let mut force = Vec3::zeros();
    let mut torque = Vec3::zeros();
    for (t, spec) in thrust.iter().zip(thrusters) {
        if *t == 0.0 {
            continue;
        }
        let f = spec.direction * *t;
        force += f;
        torque += (spec.location - com).cross(&f);
    }
    (force, torque)
}

/// Lagged thruster outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Body force `F_B`, N.
    pub force: Vec3,
    /// Body torque `L_B`, N·m.
    pub torque: Vec3,
    /// Lagged per-thruster thrust magnitudes, N (drive the mass flow).
    pub thrust: [f64; NUM_THRUSTERS],
    /// Ignition time constant τ_u, s; zero bypasses the lag.
    pub time_constant: f64,
}

impl ActuatorState {
    pub fn at_rest(time_constant: f64) -> Self {
        Self {
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
            thrust: [0.0; NUM_THRUSTERS],
            time_constant,
        }
    }
}

/// `(Ḟ, L̇) = ((F̃ − F)/τ_u, (L̃ − L)/τ_u)`.
pub fn actuator_lag_derivative(
    state: &ActuatorState,
    commanded_force: &Vec3,
    commanded_torque: &Vec3,
) -> Result<(Vec3, Vec3)> {
    let tau = state.time_constant;
    if !(tau > 0.0) {
        return Err(SimError::InvalidArgument(format!(
            "actuator time constant {tau} must be positive when the lag is enabled"
        )));
    }
    Ok(((commanded_force - state.force) / tau, (commanded_torque - state.torque) / tau))
}

/// `ṁ = −Σ‖F_i‖ / (Isp · g_ref)`, kg/s.
pub fn mass_flow(thrust_magnitudes: &[f64], isp: f64) -> f64 {
    let total: f64 = thrust_magnitudes.iter().map(|t| t.abs()).sum();
    if total == 0.0 {
        0.0
    } else {
        -total / (isp * G_REF)
    }
}

/// Time-varying mass properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassState {
    pub mass: f64,
    pub fuel_used: f64,
    /// The episode's `r_com(t0)`.
    pub com_offset_direction: Vec3,
    pub com: Vec3,
    pub inertia: Mat3,
    /// Backward difference of the inertia over the last dynamics step.
    pub inertia_rate: Mat3,
}

impl MassState {
    pub fn full(airframe: &AirframeConfig, inertia: &InertiaModel, com_model: &ComModel) -> Self {
        let mass = airframe.wet_mass();
        Self {
            mass,
            fuel_used: 0.0,
            com_offset_direction: com_model.offset_direction(),
            com: Vec3::zeros(),
            inertia: inertia.tensor(mass, &airframe.geometry),
            inertia_rate: Mat3::zeros(),
        }
    }

    /// Recomputes fuel, com, inertia, and inertia rate after a step of `dt`.
    pub fn refresh(
        &mut self,
        mass: f64,
        dt: f64,
        airframe: &AirframeConfig,
        inertia: &InertiaModel,
        com_model: &ComModel,
        rng: &mut RngStream,
    ) -> Result<()> {
        let mass = mass.clamp(airframe.dry_mass, airframe.wet_mass());
        let j = inertia.tensor(mass, &airframe.geometry);
        self.inertia_rate = if dt > 0.0 { (j - self.inertia) / dt } else { Mat3::zeros() };
        self.inertia = j;
        self.mass = mass;
        self.fuel_used = (airframe.wet_mass() - mass).clamp(0.0, airframe.fuel_capacity);
        self.com = com_model.evaluate(self.fuel_used, airframe, rng)?;
        Ok(())
    }

    pub fn fuel_exhausted(&self, airframe: &AirframeConfig) -> bool {
        self.fuel_used >= airframe.fuel_capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cmd(groups: &[usize]) -> ActionCommand {
        let mut c = ActionCommand::NONE;
        for g in groups {
            c.0[*g] = true;
        }
        c
    }

    #[test]
    fn nominal_inertia_examples() {
        let j = nominal_inertia(50.0, 0.25, 1.0);
        assert_abs_diff_eq!(j[(0, 0)], 1.5625, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(1, 1)], 4.947916666666667, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(2, 2)], 4.947916666666667, epsilon = 1e-12);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(nominal_inertia(0.0, 0.25, 1.0), Mat3::zeros());
        assert_abs_diff_eq!(nominal_inertia(25.0, 0.25, 1.0) * 2.0, j, epsilon = 1e-12);
    }

    #[test]
    fn com_drift_examples() {
        let offset = Vec3::new(0.025, 0.0125, 0.0125);
        assert_eq!(com_fuel_drift(&offset, 0.0, 25.0).unwrap(), Vec3::zeros());
        let half = com_fuel_drift(&offset, 12.5, 25.0).unwrap();
        assert_abs_diff_eq!(half, Vec3::new(0.0125, 0.00625, 0.00625), epsilon = 1e-15);
        assert_eq!(com_fuel_drift(&offset, 25.0, 25.0).unwrap(), offset);
        assert!(com_fuel_drift(&offset, 1.0, 0.0).is_err());
    }

    #[test]
    fn slosh_bounds_and_determinism() {
        let g = Geometry::default();
        let mut rng = RngStream::new(1, 2);
        for _ in 0..100 {
            assert_eq!(com_slosh(&mut rng, 0.0, &g), Vec3::zeros());
        }
        let b = com_bounds(0.025, &g);
        assert_abs_diff_eq!(b, Vec3::new(0.0125, 0.00625, 0.00625), epsilon = 1e-15);
        let mut rng = RngStream::new(1, 2);
        let draws: Vec<Vec3> = (0..1000).map(|_| com_slosh(&mut rng, 0.025, &g)).collect();
        assert!(draws.iter().all(|c| c.x.abs() <= b.x && c.y.abs() <= b.y && c.z.abs() <= b.z));
        let mut again = RngStream::new(1, 2);
        let replay: Vec<Vec3> = (0..1000).map(|_| com_slosh(&mut again, 0.025, &g)).collect();
        assert_eq!(draws, replay);
    }

    #[test]
    fn divert_through_com_has_no_torque() {
        let t = default_thrusters(&Geometry::default());
        let (f, l) = command_force_torque(&cmd(&[0]), &Vec3::zeros(), &t);
        assert_eq!(f, Vec3::new(0.0, -5000.0, 0.0));
        assert_eq!(l, Vec3::zeros());
    }

    #[test]
    fn roll_pair_is_pure_torque() {
        let t = default_thrusters(&Geometry::default());
        let (f, l) = command_force_torque(&cmd(&[4]), &Vec3::zeros(), &t);
        assert_abs_diff_eq!(f, Vec3::zeros(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, Vec3::new(-62.5, 0.0, 0.0), epsilon = 1e-12);
        let (f, l) = command_force_torque(&ActionCommand::NONE, &Vec3::zeros(), &t);
        assert_eq!((f, l), (Vec3::zeros(), Vec3::zeros()));
    }

    #[test]
    fn attitude_groups_torque_axes() {
        let t = default_thrusters(&Geometry::default());
        let expected = [
            Vec3::new(-62.5, 0.0, 0.0),
            Vec3::new(62.5, 0.0, 0.0),
            Vec3::new(0.0, 125.0, 0.0),
            Vec3::new(0.0, -125.0, 0.0),
            Vec3::new(0.0, 0.0, -125.0),
            Vec3::new(0.0, 0.0, 125.0),
        ];
        // Pair torques do not depend on the com because pair forces cancel.
        let com = Vec3::new(0.01, -0.004, 0.007);
        for (g, e) in (4..10).zip(expected) {
            let (f, l) = command_force_torque(&cmd(&[g]), &com, &t);
            assert_abs_diff_eq!(f, Vec3::zeros(), epsilon = 1e-12);
            assert_abs_diff_eq!(l, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn divert_torque_exactly_cancelled_at_five_percent_offset() {
        let g = Geometry::default();
        let t = default_thrusters(&g);
        let bound = com_bounds(0.05, &g);
        let pair_torque: Vec<Vec3> = (4..10)
            .map(|grp| command_force_torque(&cmd(&[grp]), &Vec3::zeros(), &t).1)
            .collect();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let com = Vec3::new(sx * bound.x, sy * bound.y, sz * bound.z);
                    for d in 0..NUM_DIVERT {
                        let (_, l) = command_force_torque(&cmd(&[d]), &com, &t);
                        // One pair per nonzero axis, chosen with opposite sign.
                        let mut residual = l;
                        for axis in 0..3 {
                            if l[axis].abs() < 1e-12 {
                                continue;
                            }
                            let pair = pair_torque
                                .iter()
                                .find(|p| p[axis] * l[axis] < 0.0)
                                .expect("a pair opposes every axis");
                            assert!((pair[axis].abs() - l[axis].abs()).abs() < 1e-9);
                            residual += pair;
                        }
                        assert!(residual.norm() < 1e-9, "divert {d} com {com:?}: {residual:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn lag_derivative_examples() {
        let mut s = ActuatorState::at_rest(0.02);
        s.force = Vec3::new(1.0, 2.0, 3.0);
        s.torque = Vec3::new(-1.0, 0.0, 1.0);
        let (df, dl) = actuator_lag_derivative(&s, &s.force.clone(), &s.torque.clone()).unwrap();
        assert_eq!((df, dl), (Vec3::zeros(), Vec3::zeros()));
        assert!(actuator_lag_derivative(&ActuatorState::at_rest(0.0), &df, &dl).is_err());
    }

    #[test]
    fn lag_step_response_matches_exponential() {
        // Integrate the derivative finely from rest against a 5000 N step.
        let target = Vec3::new(0.0, 5000.0, 0.0);
        let mut s = ActuatorState::at_rest(0.02);
        let dt = 1e-5;
        for _ in 0..2000 {
            let x = [s.force.y];
            let out = crate::mathkit::rk4_step(
                &x,
                |x| {
                    let mut tmp = s;
                    tmp.force.y = x[0];
                    [actuator_lag_derivative(&tmp, &target, &Vec3::zeros()).unwrap().0.y]
                },
                dt,
            )
            .unwrap();
            s.force.y = out[0];
        }
        let fraction = s.force.y / 5000.0;
        assert!((fraction - (1.0 - (-1.0f64).exp())).abs() < 1e-4, "{fraction}");
        assert!((fraction - 0.6321).abs() < 1e-4);
    }

    #[test]
    fn mass_flow_examples() {
        assert_eq!(mass_flow(&[0.0; 16], 250.0), 0.0);
        assert_abs_diff_eq!(mass_flow(&[5000.0], 250.0), -2.03874, epsilon = 1e-5);
        let t = default_thrusters(&Geometry::default());
        let all = ActionCommand([true; NUM_GROUPS]).thrust_command(&t);
        assert_abs_diff_eq!(mass_flow(&all, 250.0), -(21500.0 / (250.0 * 9.81)), epsilon = 1e-12);
        assert_abs_diff_eq!(mass_flow(&all, 250.0), -8.766, epsilon = 1e-3);
    }

    #[test]
    fn table_rows_and_groups() {
        let t = default_thrusters(&Geometry::default());
        assert_eq!(t.len(), NUM_THRUSTERS);
        for spec in &t {
            assert!((spec.direction.norm() - 1.0).abs() < 1e-12);
        }
        let groups: Vec<usize> = t.iter().map(|s| s.group).collect();
        assert_eq!(groups, vec![0, 1, 2, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9]);
        assert_eq!(t.iter().filter(|s| s.max_thrust == 5000.0).count(), 4);
    }

    #[test]
    fn thruster_table_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("thr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table.json");
        let table = default_thrusters(&Geometry::default());
        std::fs::write(&path, serde_json::to_string_pretty(&table).unwrap()).unwrap();
        assert_eq!(load_thrusters(&path).unwrap(), table);
        std::fs::write(&path, serde_json::to_string(&table[..15]).unwrap()).unwrap();
        assert!(matches!(load_thrusters(&path), Err(SimError::ConfigFault(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn refresh_keeps_mass_ledger_and_ignores_com_in_inertia() {
        let air = AirframeConfig::default();
        let com_model = ComModel::FuelDrift { offset: Vec3::new(0.0125, 0.0, 0.0) };
        let model = InertiaModel::default();
        let mut m = MassState::full(&air, &model, &com_model);
        let mut rng = RngStream::new(0, 0);
        m.refresh(air.wet_mass() - 5.0, 0.02, &air, &model, &com_model, &mut rng).unwrap();
        assert_abs_diff_eq!(m.mass, air.dry_mass + (air.fuel_capacity - m.fuel_used), epsilon = 1e-12);
        assert_abs_diff_eq!(m.fuel_used, 5.0, epsilon = 1e-12);
        assert_eq!(m.inertia, nominal_inertia(m.mass, 0.25, 1.0));
        let expected_rate = (nominal_inertia(30.0, 0.25, 1.0) - nominal_inertia(35.0, 0.25, 1.0)) / 0.02;
        assert_abs_diff_eq!(m.inertia_rate, expected_rate, epsilon = 1e-9);
        assert_abs_diff_eq!(m.com, Vec3::new(0.0025, 0.0, 0.0), epsilon = 1e-15);
        // No thrust, no mass change.
        let before = m.mass;
        m.refresh(before, 0.02, &air, &model, &com_model, &mut rng).unwrap();
        assert_eq!(m.mass, before);
        assert_eq!(m.inertia_rate, Mat3::zeros());
    }
}
