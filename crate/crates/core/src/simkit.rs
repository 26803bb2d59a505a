//! World and robot simulator.
//!
//! The robot executes an alternating stream of rotate/forward commands drawn
//! from uniform distributions, regularly driving back to its charging dock.
//! Every command is spread over several CSI sample instants at a constant
//! per-sample speed, so one command usually spans many samples. The only
//! motion signal exported for training is the [`DisplacementLog`]: the
//! commanded per-sample displacement, scaled by the bias compensation factor
//! and rotated by the dead-reckoned heading.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Polygon, Segment, Vec2};

/// Distance below which a returning robot is considered docked.
pub const DOCKING_TOLERANCE: f64 = 0.01;

const MAX_REDRAWS: usize = 100;
/// Redraws after which the rotation is drawn from the full circle.
const WIDEN_AFTER: usize = 10;
const MAX_DOCK_ATTEMPTS: usize = 20;
const WAYPOINT_MARGIN: f64 = 0.1;

/// Position and heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub area: Polygon,
    pub ap_positions: Vec<Vec2>,
    /// Receive antenna offsets relative to each AP position; shared by all APs.
    pub ap_antenna_offsets: Vec<Vec2>,
    pub blockers: Vec<Segment>,
    pub dock: Pose,
    pub scatterers: Vec<Vec2>,
    pub rng_seed: u64,
}

impl WorldConfig {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.ap_antenna_offsets.len()
    }

    /// Absolute position of antenna `a` of AP `b`.
    pub fn antenna_position(&self, b: usize, a: usize) -> Vec2 {
        self.ap_positions[b] + self.ap_antenna_offsets[a]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.area.is_simple() {
            return Err(Error::Config("area polygon is not simple".into()));
        }
        if self.ap_positions.is_empty() {
            return Err(Error::Config("at least one AP required".into()));
        }
        if self.ap_antenna_offsets.is_empty() {
            return Err(Error::Config("at least one antenna per AP required".into()));
        }
        if !self.area.contains(self.dock.position) {
            return Err(Error::Config("dock lies outside the measurement area".into()));
        }
        Ok(())
    }
}

/// Command distributions and error model of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    /// Uniform support of forward distances (m).
    pub forward_dist_range: (f64, f64),
    /// Uniform support of rotation angles (rad).
    pub rotate_angle_range: (f64, f64),
    /// Systematic scale of executed forward motion (alpha).
    pub forward_bias: f64,
    /// Per-sample along-track noise std (m).
    pub forward_noise_std: f64,
    /// Per-rotation-command heading noise std (rad).
    pub rotate_noise_std: f64,
    /// Scale applied to commanded displacements when reporting them.
    pub bias_compensation: f64,
    /// Random commands between dock returns.
    pub dock_return_period: usize,
    /// Commanded distance covered per sample instant (m).
    pub forward_step: f64,
    /// Commanded rotation covered per sample instant (rad).
    pub rotate_step: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            forward_dist_range: (0.05, 0.25),
            rotate_angle_range: (-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4),
            forward_bias: 0.95,
            forward_noise_std: 5e-4,
            rotate_noise_std: 0.03,
            bias_compensation: 0.95,
            dock_return_period: 200,
            forward_step: 0.005,
            rotate_step: 0.1,
        }
    }
}

impl MotionModel {
    pub fn noiseless(mut self) -> Self {
        self.forward_noise_std = 0.0;
        self.rotate_noise_std = 0.0;
        self.bias_compensation = self.forward_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (f0, f1) = self.forward_dist_range;
        let (r0, r1) = self.rotate_angle_range;
        if !(f0 > 0.0 && f0 <= f1) {
            return Err(Error::Config("forward range must satisfy 0 < min <= max".into()));
        }
        if !(r0 <= r1) {
            return Err(Error::Config("rotation range must satisfy min <= max".into()));
        }
        if !(self.forward_noise_std >= 0.0 && self.rotate_noise_std >= 0.0) {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        if !(self.forward_bias > 0.0 && self.bias_compensation > 0.0) {
            return Err(Error::Config("bias factors must be > 0".into()));
        }
        if !(self.forward_step > 0.0 && self.rotate_step > 0.0) {
            return Err(Error::Config("per-sample steps must be > 0".into()));
        }
        if self.dock_return_period == 0 {
            return Err(Error::Config("dock_return_period must be >= 1".into()));
        }
        Ok(())
    }
}

/// A single robot command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    /// Drive straight ahead by the given distance (m).
    Forward(f64),
    /// Rotate in place by the given angle (rad, counter-clockwise).
    Rotate(f64),
}

/// Ground-truth UE positions, used for evaluation only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
    /// Sorted sample indices at which the robot sits in its dock.
    pub dock_indices: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Bias-compensated displacement measurements; `measurements[n]` relates
/// sample `n` to sample `n + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisplacementLog {
    pub measurements: Vec<Vec2>,
}

impl DisplacementLog {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// `x_{n+1} - x_n` for every consecutive pair of positions.
pub fn true_displacements(traj: &Trajectory) -> Vec<Vec2> {
    traj.positions.windows(2).map(|w| w[1] - w[0]).collect()
}

struct Robot<'a> {
    world: &'a WorldConfig,
    motion: &'a MotionModel,
    rng: ChaCha8Rng,
    /// Ground-truth pose.
    pose: Pose,
    /// Heading the robot believes it has.
    dr_heading: f64,
    traj: Trajectory,
    log: DisplacementLog,
    limit: usize,
}

/// Samples a planned forward move would produce, before committing.
struct ForwardPlan {
    true_steps: Vec<Vec2>,
    measured_steps: Vec<Vec2>,
}

impl<'a> Robot<'a> {
    fn new(world: &'a WorldConfig, motion: &'a MotionModel, limit: usize) -> Self {
        let mut traj = Trajectory::default();
        traj.positions.push(world.dock.position);
        traj.headings.push(world.dock.heading);
        traj.dock_indices.push(0);
        Self {
            world,
            motion,
            rng: ChaCha8Rng::seed_from_u64(world.rng_seed),
            pose: world.dock,
            dr_heading: world.dock.heading,
            traj,
            log: DisplacementLog::default(),
            limit,
        }
    }

    fn full(&self) -> bool {
        self.traj.positions.len() >= self.limit
    }

    fn push_sample(&mut self, true_step: Vec2, measured: Vec2) {
        if self.full() {
            return;
        }
        self.pose.position += true_step;
        self.traj.positions.push(self.pose.position);
        self.traj.headings.push(self.pose.heading);
        self.log.measurements.push(measured);
    }

    fn gaussian(&mut self, std: f64) -> f64 {
        if std == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, std).expect("finite std").sample(&mut self.rng)
    }

    /// Executes a rotation; returns the true heading change.
    fn rotate(&mut self, angle: f64, noise: f64) {
        let k = (angle.abs() / self.motion.rotate_step).ceil() as usize;
        if k == 0 {
            self.pose.heading = wrap_angle(self.pose.heading + noise);
            return;
        }
        let true_total = angle + noise;
        for _ in 0..k {
            self.pose.heading = wrap_angle(self.pose.heading + true_total / k as f64);
            self.dr_heading = wrap_angle(self.dr_heading + angle / k as f64);
            self.push_sample(Vec2::ZERO, Vec2::ZERO);
        }
    }

    fn plan_forward(&mut self, dist: f64, heading: f64, dr_heading: f64) -> ForwardPlan {
        let k = ((dist / self.motion.forward_step).ceil() as usize).max(1);
        let step = dist / k as f64;
        let dir = Vec2::from_angle(heading);
        let dr_dir = Vec2::from_angle(dr_heading);
        let mut plan = ForwardPlan { true_steps: Vec::with_capacity(k), measured_steps: Vec::with_capacity(k) };
        for _ in 0..k {
            let along = self.motion.forward_bias * step + self.gaussian(self.motion.forward_noise_std);
            plan.true_steps.push(dir * along);
            plan.measured_steps.push(dr_dir * (self.motion.bias_compensation * step));
        }
        plan
    }

    fn plan_inside(&self, start: Vec2, plan: &ForwardPlan) -> bool {
        let mut p = start;
        plan.true_steps.iter().all(|&s| {
            p += s;
            self.world.area.contains(p)
        })
    }

    fn commit(&mut self, plan: ForwardPlan) {
        for (t, m) in plan.true_steps.into_iter().zip(plan.measured_steps) {
            self.push_sample(t, m);
        }
    }

    /// One random rotate/forward pair; pairs leaving the area are redrawn.
    fn random_pair(&mut self) -> Result<()> {
        let (r0, r1) = self.motion.rotate_angle_range;
        let (f0, f1) = self.motion.forward_dist_range;
        let narrow = Uniform::new_inclusive(r0, r1).map_err(|e| Error::Config(e.to_string()))?;
        let wide = Uniform::new_inclusive(-std::f64::consts::PI, std::f64::consts::PI).expect("valid range");
        let dist_u = Uniform::new_inclusive(f0, f1).map_err(|e| Error::Config(e.to_string()))?;
        for attempt in 0..MAX_REDRAWS {
            let angle = if attempt < WIDEN_AFTER { narrow.sample(&mut self.rng) } else { wide.sample(&mut self.rng) };
            let noise = self.gaussian(self.motion.rotate_noise_std);
            let dist = dist_u.sample(&mut self.rng);
            let heading = wrap_angle(self.pose.heading + angle + noise);
            let dr_heading = wrap_angle(self.dr_heading + angle);
            let plan = self.plan_forward(dist, heading, dr_heading);
            if self.plan_inside(self.pose.position, &plan) {
                self.rotate(angle, noise);
                self.commit(plan);
                return Ok(());
            }
        }
        Err(Error::AreaTooSmall(format!(
            "no legal forward move from ({:.3}, {:.3}) after {MAX_REDRAWS} draws",
            self.pose.position.x, self.pose.position.y
        )))
    }

    /// Rotate toward `target` and drive there. Steps that would leave the
    /// area are absorbed by the wall: the reported motion still happens.
    fn drive_to(&mut self, target: Vec2) {
        let to = target - self.pose.position;
        let angle = wrap_angle(to.angle() - self.pose.heading);
        let noise = self.gaussian(self.motion.rotate_noise_std);
        self.rotate(angle, noise);
        // Command the distance that, after the expected bias, lands on target.
        let dist = to.norm() / self.motion.bias_compensation;
        let plan = self.plan_forward(dist, self.pose.heading, self.dr_heading);
        for (t, m) in plan.true_steps.into_iter().zip(plan.measured_steps) {
            let t = if self.world.area.contains(self.pose.position + t) { t } else { Vec2::ZERO };
            self.push_sample(t, m);
        }
    }

    fn return_to_dock(&mut self) {
        let dock = self.world.dock;
        for waypoint in plan_path(&self.world.area, self.pose.position, dock.position) {
            if self.full() {
                return;
            }
            self.drive_to(waypoint);
        }
        for _ in 0..MAX_DOCK_ATTEMPTS {
            if self.full() || self.pose.position.distance(dock.position) <= DOCKING_TOLERANCE {
                break;
            }
            self.drive_to(dock.position);
        }
        if self.full() {
            return;
        }
        // Mechanical docking: position and heading snap to the dock pose.
        let align = wrap_angle(dock.heading - self.pose.heading);
        self.rotate(align, 0.0);
        if self.full() {
            return;
        }
        self.pose = dock;
        self.dr_heading = dock.heading;
        let last = self.traj.positions.len() - 1;
        if last > 0 {
            self.traj.positions[last] = dock.position;
            self.traj.headings[last] = dock.heading;
            if self.traj.dock_indices.last() != Some(&last) {
                self.traj.dock_indices.push(last);
            }
        }
    }
}

/// Shortest waypoint path from `from` to `to` through vertices pulled into
/// the polygon interior. Returns just `[to]` when the straight segment fits.
fn plan_path(area: &Polygon, from: Vec2, to: Vec2) -> Vec<Vec2> {
    if area.contains_segment(&Segment::new(from, to)) {
        return vec![to];
    }
    let verts = area.vertices();
    let n = verts.len();
    let mut nodes = vec![from, to];
    for i in 0..n {
        let prev = verts[(i + n - 1) % n];
        let next = verts[(i + 1) % n];
        let v = verts[i];
        let bisector = ((prev - v) * (1.0 / (prev - v).norm())) + ((next - v) * (1.0 / (next - v).norm()));
        if bisector.norm() < 1e-12 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let cand = v + bisector * (sign * WAYPOINT_MARGIN / bisector.norm());
            if area.contains(cand) && area.boundary_distance(cand) > 0.5 * WAYPOINT_MARGIN {
                nodes.push(cand);
                break;
            }
        }
    }
    // Dijkstra over the visibility graph.
    let m = nodes.len();
    let mut dist = vec![f64::INFINITY; m];
    let mut prev = vec![usize::MAX; m];
    let mut done = vec![false; m];
    dist[0] = 0.0;
    for _ in 0..m {
        let Some(u) = (0..m).filter(|&i| !done[i]).min_by(|&a, &b| dist[a].total_cmp(&dist[b])) else {
            break;
        };
        if dist[u].is_infinite() {
            break;
        }
        done[u] = true;
        for v in 0..m {
            if done[v] || !area.contains_segment(&Segment::new(nodes[u], nodes[v])) {
                continue;
            }
            let d = dist[u] + nodes[u].distance(nodes[v]);
            if d < dist[v] {
                dist[v] = d;
                prev[v] = u;
            }
        }
    }
    if dist[1].is_infinite() {
        return vec![to];
    }
    let mut path = vec![];
    let mut cur = 1;
    while cur != 0 {
        path.push(nodes[cur]);
        cur = prev[cur];
    }
    path.reverse();
    path
}

/// Simulates `n_samples` sample instants of a randomly driving robot.
pub fn generate_trajectory(
    world: &WorldConfig,
    motion: &MotionModel,
    n_samples: usize,
) -> Result<(Trajectory, DisplacementLog)> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be >= 2".into()));
    }
    world.validate()?;
    motion.validate()?;
    let mut robot = Robot::new(world, motion, n_samples);
    let mut commands_since_dock = 0;
    while !robot.full() {
        if commands_since_dock >= motion.dock_return_period {
            robot.return_to_dock();
            commands_since_dock = 0;
            continue;
        }
        robot.random_pair()?;
        commands_since_dock += 2;
    }
    Ok((robot.traj, robot.log))
}

/// Executes an explicit command list from the dock pose, without redraws.
/// Fails if any sample leaves the measurement area.
pub fn execute_commands(
    world: &WorldConfig,
    motion: &MotionModel,
    commands: &[Command],
) -> Result<(Trajectory, DisplacementLog)> {
    world.validate()?;
    motion.validate()?;
    let mut robot = Robot::new(world, motion, usize::MAX);
    for &cmd in commands {
        match cmd {
            Command::Rotate(angle) => {
                let noise = robot.gaussian(motion.rotate_noise_std);
                robot.rotate(angle, noise);
            }
            Command::Forward(dist) => {
                let plan = robot.plan_forward(dist, robot.pose.heading, robot.dr_heading);
                if !robot.plan_inside(robot.pose.position, &plan) {
                    return Err(Error::InvalidArgument(format!("command {cmd:?} leaves the measurement area")));
                }
                robot.commit(plan);
            }
        }
    }
    Ok((robot.traj, robot.log))
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "n,x,y,heading")?;
    for (n, (p, h)) in traj.positions.iter().zip(&traj.headings).enumerate() {
        writeln!(out, "{n},{},{},{}", p.x, p.y, h)?;
    }
    Ok(())
}

pub fn write_displacements_csv<W: Write>(log: &DisplacementLog, mut out: W) -> Result<()> {
    writeln!(out, "n,dx,dy")?;
    for (n, d) in log.measurements.iter().enumerate() {
        writeln!(out, "{n},{},{}", d.x, d.y)?;
    }
    Ok(())
}

fn parse_rows(path: &Path, header: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut lines = std::io::BufReader::new(file).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(Error::format(path, format!("expected header `{header}`")));
    }
    let mut rows = vec![];
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
        if vals.len() != width {
            return Err(Error::format(path, format!("row {} has {} fields", i + 1, vals.len())));
        }
        if vals[0] as usize != i {
            return Err(Error::format(path, format!("row {} out of order", i + 1)));
        }
        rows.push(vals);
    }
    Ok(rows)
}

/// Reads a trajectory CSV. Dock indices are not part of the format and come
/// back empty.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let rows = parse_rows(path, "n,x,y,heading", 4)?;
    Ok(Trajectory {
        positions: rows.iter().map(|r| Vec2::new(r[1], r[2])).collect(),
        headings: rows.iter().map(|r| r[3]).collect(),
        dock_indices: vec![],
    })
}

pub fn read_displacements_csv(path: &Path) -> Result<DisplacementLog> {
    let rows = parse_rows(path, "n,dx,dy", 3)?;
    Ok(DisplacementLog { measurements: rows.iter().map(|r| Vec2::new(r[1], r[2])).collect() })
}

/// Draws `count` scatterer positions uniformly inside `area`.
pub fn random_scatterers(area: &Polygon, count: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = area.bounding_box();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if area.contains(p) {
            out.push(p);
        }
    }
    out
}
