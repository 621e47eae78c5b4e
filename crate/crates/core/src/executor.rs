//! Closed-loop program execution: a simple physical world model, an exact
//! reactive policy that recovers from faults, fault injection, the learned
//! execution network, and execution trace files.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BinaryRelations, CuboidPose, Scene, ground_truth_relations};
use crate::neural::{self, Dataset, HeadSpec, LossKind, NetSpec, Params, Pathing, TrainConfig};
use crate::program::{self, ObjId, Program, Rel};

/// Largest cube count the shared execution network is sized for.
pub const N_MAX: usize = 6;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("action rejected: {0}")]
    ActionRejected(String),
    #[error("program references object {0} outside the scene")]
    ReferenceError(ObjId),
    #[error("config error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Neural(#[from] neural::NeuralError),
    #[error(transparent)]
    Program(#[from] program::ProgramError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExecError>;

/// `target == None` means the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Action {
    pub done: bool,
    pub source: ObjId,
    pub target: Option<ObjId>,
    pub rel: Rel,
}

impl Action {
    pub fn finish() -> Self {
        Action { done: true, source: 0, target: None, rel: Rel::Above }
    }

    pub fn place(source: ObjId, target: ObjId, rel: Rel) -> Self {
        Action { done: false, source, target: Some(target), rel }
    }

    pub fn to_table(source: ObjId) -> Self {
        Action { done: false, source, target: None, rel: Rel::Above }
    }
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub scene: Scene,
    pub step_count: usize,
}

impl WorldState {
    /// All cubes flat on the table, widely spaced so no relations hold.
    pub fn flat(n: usize) -> Self {
        let e = crate::geometry::DEFAULT_EDGE;
        let cuboids = (0..n)
            .map(|i| CuboidPose::new([i as f64 * 4.0 * e, 0.0, e / 2.0], 0.0, i))
            .collect();
        WorldState { scene: Scene { cuboids }, step_count: 0 }
    }

    pub fn relations(&self) -> BinaryRelations {
        ground_truth_relations(&self.scene)
    }

    fn edge(&self) -> f64 {
        self.scene.cuboids.first().map(|c| c.edge).unwrap_or(crate::geometry::DEFAULT_EDGE)
    }

    /// First spawn-grid position clear of every cube.
    fn free_table_slot(&self, moving: ObjId) -> [f64; 3] {
        let e = self.edge();
        for row in 1.. {
            for k in 0..16 {
                let candidate = [k as f64 * 4.0 * e, -(row as f64) * 4.0 * e, e / 2.0];
                let clear = self.scene.cuboids.iter().enumerate().all(|(i, c)| {
                    i == moving
                        || (c.center[0] - candidate[0]).abs() >= 2.0 * e
                        || (c.center[1] - candidate[1]).abs() >= 2.0 * e
                });
                if clear {
                    return candidate;
                }
            }
        }
        unreachable!()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FaultEvent {
    ActionFailed,
    Perturbed(ObjId),
}

#[derive(Debug, Clone, Default)]
pub struct FaultConfig {
    /// Probability that a commanded action silently does nothing.
    pub action_failure_prob: f64,
    /// Deterministic variant: the action at this step count does nothing.
    pub fail_at_step: Option<usize>,
    /// At the given step count, teleport the cube to a free table slot.
    pub perturbation: Option<(usize, ObjId)>,
}

fn pile_clear(rel: &BinaryRelations, o: ObjId, ignoring: ObjId) -> bool {
    (0..rel.n).all(|x| x == ignoring || !rel.above[x][o])
}

/// Left-adjacent partner of `t` at matching height with a clear top, i.e.
/// the second support when a placement on `t` should straddle.
fn straddle_partner(world: &WorldState, rel: &BinaryRelations, t: ObjId, moving: ObjId) -> Option<ObjId> {
    let e = world.edge();
    (0..rel.n).find(|&p| {
        rel.left[t][p]
            && (world.scene.cuboids[t].center[2] - world.scene.cuboids[p].center[2]).abs() < 0.25 * e
            && pile_clear(rel, p, moving)
    })
}

/// Apply one action; faults may suppress it, and a scripted perturbation
/// fires after the action at its configured step.
pub fn apply_action(
    world: &mut WorldState,
    action: &Action,
    faults: &FaultConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FaultEvent>> {
    let mut events = Vec::new();
    let n = world.scene.n();
    if !action.done {
        if action.source >= n || action.target.is_some_and(|t| t >= n) {
            return Err(ExecError::ReferenceError(action.source.max(action.target.unwrap_or(0))));
        }
        let scripted_failure = faults.fail_at_step == Some(world.step_count);
        if scripted_failure
            || (faults.action_failure_prob > 0.0
                && rng.random::<f64>() < faults.action_failure_prob)
        {
            events.push(FaultEvent::ActionFailed);
        } else {
            let rel = world.relations();
            let e = world.edge();
            if !pile_clear(&rel, action.source, action.source) {
                return Err(ExecError::ActionRejected(format!(
                    "object {} is loaded",
                    action.source
                )));
            }
            let destination = match (action.target, action.rel) {
                (None, _) => world.free_table_slot(action.source),
                (Some(t), Rel::Above) => {
                    if !pile_clear(&rel, t, action.source) {
                        return Err(ExecError::ActionRejected(format!("object {t} is loaded")));
                    }
                    let tc = world.scene.cuboids[t].center;
                    match straddle_partner(world, &rel, t, action.source) {
                        Some(p) => {
                            let pc = world.scene.cuboids[p].center;
                            [(tc[0] + pc[0]) / 2.0, (tc[1] + pc[1]) / 2.0, tc[2].max(pc[2]) + e]
                        }
                        None => [tc[0], tc[1], tc[2] + e],
                    }
                }
                (Some(t), Rel::Left) => {
                    let tc = world.scene.cuboids[t].center;
                    [tc[0] - e, tc[1], e / 2.0]
                }
            };
            for (i, c) in world.scene.cuboids.iter().enumerate() {
                if i == action.source {
                    continue;
                }
                let overlap = (0..3)
                    .all(|a| (c.center[a] - destination[a]).abs() < c.edge - 1e-9);
                if overlap {
                    return Err(ExecError::ActionRejected(format!(
                        "destination interpenetrates object {i}"
                    )));
                }
            }
            world.scene.cuboids[action.source].center = destination;
        }
    }
    if let Some((at, obj)) = faults.perturbation {
        if world.step_count == at && obj < n {
            let rel = world.relations();
            if pile_clear(&rel, obj, obj) {
                let slot = world.free_table_slot(obj);
                world.scene.cuboids[obj].center = slot;
                events.push(FaultEvent::Perturbed(obj));
            }
        }
    }
    world.step_count += 1;
    Ok(events)
}

fn step_satisfied(step: &program::ProgramStep, state: &BinaryRelations) -> bool {
    match step.rel {
        Rel::Above => state.above[step.pick][step.place],
        Rel::Left => state.left[step.pick][step.place],
    }
}

fn topmost_of_pile(state: &BinaryRelations, base: ObjId) -> ObjId {
    let mut cur = base;
    'climb: loop {
        for x in 0..state.n {
            if state.above[x][cur] {
                cur = x;
                continue 'climb;
            }
        }
        return cur;
    }
}

/// Exact reactive policy. Picks the earliest unsatisfied step whose target
/// is already placed; emits table-clearing moves when the pick or the
/// placement site is blocked; returns the done action when every step holds.
pub fn next_action_oracle(program: &Program, state: &BinaryRelations) -> Result<Action> {
    let n = state.n;
    for step in &program.steps {
        if step.pick >= n || step.place >= n {
            return Err(ExecError::ReferenceError(step.pick.max(step.place)));
        }
    }
    let placement_step_of = |o: ObjId| program.steps.iter().find(|s| s.pick == o);
    let step = program.steps.iter().find(|s| {
        if step_satisfied(s, state) {
            return false;
        }
        // target dependency: the step that places the target (if any)
        // must already hold
        placement_step_of(s.place).is_none_or(|dep| step_satisfied(dep, state))
    });
    let Some(step) = step else {
        return Ok(Action::finish());
    };
    // clear anything stacked on the pick
    if !pile_clear(state, step.pick, step.pick) {
        return Ok(Action::to_table(topmost_of_pile(state, step.pick)));
    }
    // for stacking, clear the placement site (and the second support of a
    // straddling placement)
    if step.rel == Rel::Above {
        let mut sites = vec![step.place];
        sites.extend((0..n).filter(|&p| state.left[step.place][p]));
        for site in sites {
            if !pile_clear(state, site, step.pick) {
                return Ok(Action::to_table(topmost_of_pile(state, site)));
            }
        }
    }
    Ok(Action::place(step.pick, step.place, step.rel))
}

/// Relations produced by a faultless run of the program from a flat table.
pub fn goal_relations(program: &Program) -> Result<BinaryRelations> {
    let mut world = WorldState::flat(program.n);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let faults = FaultConfig::default();
    for step in &program.steps {
        apply_action(&mut world, &Action::place(step.pick, step.place, step.rel), &faults, &mut rng)?;
    }
    Ok(world.relations())
}

pub enum ExecPolicy<'a> {
    Oracle,
    Learned(&'a Params<f32>),
}

impl ExecPolicy<'_> {
    fn decide(&self, program: &Program, state: &BinaryRelations) -> Result<Action> {
        match self {
            ExecPolicy::Oracle => next_action_oracle(program, state),
            ExecPolicy::Learned(params) => {
                let input = encode_exec_input(program, state)?;
                let row = Array2::from_shape_vec((1, input.len()), input)
                    .expect("input length is fixed");
                let out = neural::forward(params, &row)?;
                Ok(decode_exec_output(out[0].row(0).as_slice().unwrap()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub step: usize,
    pub action: Action,
    pub state_tensor_hash: String,
    pub fault_events: Vec<FaultEvent>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub success: bool,
    pub trace: Vec<TraceEntry>,
}

fn state_hash(state: &BinaryRelations) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bit: bool| {
        h ^= bit as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for i in 0..state.n {
        for j in 0..state.n {
            eat(state.above[i][j]);
            eat(state.left[i][j]);
        }
    }
    format!("{h:016x}")
}

/// Run sense-decide-act until the policy declares done or the step budget
/// (2n² by default) runs out; success means the final relations equal the
/// program goal.
pub fn run_closed_loop(
    program: &Program,
    world: &mut WorldState,
    policy: &ExecPolicy,
    faults: &FaultConfig,
    rng: &mut ChaCha8Rng,
    max_steps: Option<usize>,
) -> Result<RunOutcome> {
    let goal = goal_relations(program)?;
    let budget = max_steps.unwrap_or(2 * program.n * program.n);
    let mut trace = Vec::new();
    loop {
        let state = world.relations();
        let action = policy.decide(program, &state)?;
        if action.done {
            trace.push(TraceEntry {
                step: world.step_count,
                action,
                state_tensor_hash: state_hash(&state),
                fault_events: Vec::new(),
            });
            return Ok(RunOutcome { success: state == goal, trace });
        }
        if trace.len() >= budget {
            return Ok(RunOutcome { success: false, trace });
        }
        let step = world.step_count;
        let events = apply_action(world, &action, faults, rng)?;
        trace.push(TraceEntry {
            step,
            action,
            state_tensor_hash: state_hash(&world.relations()),
            fault_events: events,
        });
    }
}

pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[TraceEntry]) -> Result<()> {
    for entry in trace {
        serde_json::to_writer(&mut w, entry)
            .map_err(|e| ExecError::ConfigError(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// learned execution network

pub const EXEC_INPUT_DIM: usize = 2 * (N_MAX - 1) * (N_MAX + 1) + (N_MAX - 1) * 2 + N_MAX * N_MAX * 3;
pub const EXEC_OUTPUT_DIM: usize = N_MAX + (N_MAX + 1) + 2 + 1;

/// Program tensor re-encoded at the shared size plus the flattened state
/// tensor; scenes with fewer cubes keep their object indices.
pub fn encode_exec_input(program: &Program, state: &BinaryRelations) -> Result<Vec<f32>> {
    if state.n > N_MAX || program.n > N_MAX {
        return Err(ExecError::ConfigError(format!("n > {N_MAX} unsupported")));
    }
    let mut v = Vec::with_capacity(EXEC_INPUT_DIM);
    for s in 0..N_MAX - 1 {
        let step = program.steps.get(s);
        for head in 0..2 {
            for c in 0..=N_MAX {
                let hot = match step {
                    Some(st) => c == if head == 0 { st.pick } else { st.place },
                    None => c == N_MAX,
                };
                v.push(hot as u8 as f32);
            }
        }
        let rel = step.map(|st| st.rel).unwrap_or(Rel::Above);
        v.push((rel == Rel::Above) as u8 as f32);
        v.push((rel == Rel::Left) as u8 as f32);
    }
    for i in 0..N_MAX {
        for j in 0..N_MAX {
            let (a, l) = if i < state.n && j < state.n && i != j {
                (state.above[i][j], state.left[i][j])
            } else {
                (false, false)
            };
            let none = i != j && i < state.n && j < state.n && !a && !l;
            v.push(a as u8 as f32);
            v.push(l as u8 as f32);
            v.push(none as u8 as f32);
        }
    }
    debug_assert_eq!(v.len(), EXEC_INPUT_DIM);
    Ok(v)
}

/// Source one-hot, target one-hot (last slot = table), relation one-hot,
/// done flag.
pub fn encode_exec_action(action: &Action) -> Vec<f32> {
    let mut v = vec![0.0f32; EXEC_OUTPUT_DIM];
    if action.done {
        v[EXEC_OUTPUT_DIM - 1] = 1.0;
    } else {
        v[action.source] = 1.0;
        v[N_MAX + action.target.unwrap_or(N_MAX)] = 1.0;
        v[2 * N_MAX + 1 + if action.rel == Rel::Above { 0 } else { 1 }] = 1.0;
    }
    v
}

pub fn decode_exec_output(out: &[f32]) -> Action {
    if out[EXEC_OUTPUT_DIM - 1] >= 0.5 {
        return Action::finish();
    }
    let argmax = |s: &[f32]| {
        s.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    };
    let source = argmax(&out[0..N_MAX]);
    let target = argmax(&out[N_MAX..2 * N_MAX + 1]);
    let rel = if argmax(&out[2 * N_MAX + 1..2 * N_MAX + 3]) == 0 { Rel::Above } else { Rel::Left };
    Action {
        done: false,
        source,
        target: if target == N_MAX { None } else { Some(target) },
        rel,
    }
}

/// Every (program, state, oracle action) triple along the faultless path
/// of every stack goal over `n_range` cubes, plus recovery states with one
/// structure member displaced to the table. Fully deterministic.
pub fn enumerate_exec_dataset(n_range: std::ops::RangeInclusive<usize>) -> Result<Dataset<f32>> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0usize;
    let mut record = |program: &Program, state: &BinaryRelations| -> Result<()> {
        let action = next_action_oracle(program, state)?;
        inputs.extend(encode_exec_input(program, state)?);
        targets.extend(encode_exec_action(&action));
        rows += 1;
        Ok(())
    };
    for n in n_range {
        if n > N_MAX {
            return Err(ExecError::ConfigError(format!("n > {N_MAX} unsupported")));
        }
        for (goal, program) in program::enumerate_goals(n, false)? {
            let mut world = WorldState::flat(n);
            let faults = FaultConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            loop {
                let state = world.relations();
                record(&program, &state)?;
                let action = next_action_oracle(&program, &state)?;
                if action.done {
                    break;
                }
                apply_action(&mut world, &action, &faults, &mut rng)?;
            }
            // recovery states: displace each clear structure member
            for o in 0..n {
                let related = (0..n).any(|j| goal.above[o][j] || goal.above[j][o]);
                if !related || !pile_clear(&goal, o, o) {
                    continue;
                }
                let mut displaced = world.clone();
                let slot = displaced.free_table_slot(o);
                displaced.scene.cuboids[o].center = slot;
                record(&program, &displaced.relations())?;
            }
        }
    }
    let inputs = Array2::from_shape_vec((rows, EXEC_INPUT_DIM), inputs)
        .expect("row width is fixed");
    let targets = Array2::from_shape_vec((rows, EXEC_OUTPUT_DIM), targets)
        .expect("row width is fixed");
    Ok(Dataset { inputs, targets: vec![targets] })
}

const EDAT_MAGIC: &[u8; 4] = b"EDAT";
const EDAT_VERSION: u32 = 1;

/// Little-endian binary dump: magic, version, rows, input and output
/// widths as u32, then float32 inputs and targets, row-major.
pub fn write_exec_dataset<W: std::io::Write>(mut w: W, data: &Dataset<f32>) -> Result<()> {
    w.write_all(EDAT_MAGIC)?;
    for field in [
        EDAT_VERSION,
        data.inputs.nrows() as u32,
        data.inputs.ncols() as u32,
        data.targets[0].ncols() as u32,
    ] {
        w.write_all(&field.to_le_bytes())?;
    }
    for block in [&data.inputs, &data.targets[0]] {
        for &x in block.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_exec_dataset<R: std::io::Read>(mut r: R) -> Result<Dataset<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EDAT_MAGIC {
        return Err(ExecError::ConfigError("not an execution dataset file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut next = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = next(&mut r)?;
    if version != EDAT_VERSION {
        return Err(ExecError::ConfigError(format!("unsupported dataset version {version}")));
    }
    let rows = next(&mut r)? as usize;
    let in_dim = next(&mut r)? as usize;
    let out_dim = next(&mut r)? as usize;
    let mut read_block = |cols: usize| -> Result<Array2<f32>> {
        let mut buf = vec![0u8; rows * cols * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), data).expect("sized above"))
    };
    let inputs = read_block(in_dim)?;
    let targets = read_block(out_dim)?;
    Ok(Dataset { inputs, targets: vec![targets] })
}

pub fn exec_net_spec() -> NetSpec {
    NetSpec {
        input_dim: EXEC_INPUT_DIM,
        hidden: vec![128; 5],
        heads: vec![HeadSpec { dim: EXEC_OUTPUT_DIM, loss: LossKind::Mse }],
        pathing: Pathing::SharedTrunk,
    }
}

pub fn train_exec_net(data: &Dataset<f32>, config: &TrainConfig) -> Result<Params<f32>> {
    Ok(neural::train(&exec_net_spec(), data, config)?.params)
}

/// Fraction of records whose decoded prediction equals the oracle action.
pub fn eval_exec_net(params: &Params<f32>, data: &Dataset<f32>) -> Result<f64> {
    let out = neural::forward(params, &data.inputs)?;
    let mut correct = 0usize;
    for (orow, trow) in out[0].rows().into_iter().zip(data.targets[0].rows()) {
        let predicted = decode_exec_output(orow.as_slice().unwrap());
        let truth = decode_exec_output(trow.as_slice().unwrap());
        if predicted == truth {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.inputs.nrows() as f64)
}
