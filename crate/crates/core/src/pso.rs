//! Global-best particle swarm over the unit cube `[0,1]^3`.
//!
//! Each particle owns its own ChaCha stream derived from the swarm seed and
//! the particle index, so the random draws do not depend on the order or
//! thread in which fitness values are computed. Fitness is maximized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ca::{decode_particle, max_rule, CellTable, DetectorParams, ParamsRecord};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::metrics::dsc;

pub type Position = [f64; 3];

/// Inertia and acceleration coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsoHyper {
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for PsoHyper {
    fn default() -> Self {
        Self {
            w: 0.9,
            c1: 0.5,
            c2: 0.3,
        }
    }
}

/// How the random factors r1, r2 are drawn for a particle's update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawMode {
    /// Independent draws for every coordinate.
    #[default]
    Vector,
    /// One draw each for r1 and r2, shared by all coordinates.
    Scalar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Position,
    pub velocity: Position,
    pub best_position: Position,
    pub best_fitness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub global_best_position: Position,
    pub global_best_fitness: f64,
    pub hyper: PsoHyper,
    pub draw_mode: DrawMode,
    pub seed: u64,
    streams: Vec<ChaCha8Rng>,
}

fn particle_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

impl Swarm {
    /// `n` particles uniform in the unit cube with zero velocity.
    pub fn new(n: usize, seed: u64, hyper: PsoHyper) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("a swarm needs at least one particle"));
        }
        let mut streams: Vec<ChaCha8Rng> = (0..n).map(|i| particle_stream(seed, i)).collect();
        let particles: Vec<Particle> = streams
            .iter_mut()
            .map(|rng| {
                let position = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
                Particle {
                    position,
                    velocity: [0.0; 3],
                    best_position: position,
                    best_fitness: f64::NEG_INFINITY,
                }
            })
            .collect();
        Ok(Self {
            global_best_position: particles[0].best_position,
            global_best_fitness: f64::NEG_INFINITY,
            particles,
            hyper,
            draw_mode: DrawMode::default(),
            seed,
            streams,
        })
    }

    /// Rebuilds a swarm from a saved population; random streams restart from `seed`.
    ///
    /// Personal-best fitness is taken from the snapshot when present, otherwise
    /// it is unknown until [`Swarm::evaluate_bests`] runs.
    pub fn from_snapshot(snapshot: &SwarmSnapshot, seed: u64, hyper: PsoHyper) -> Result<Self> {
        if snapshot.particles.is_empty() {
            return Err(Error::invalid("population snapshot has no particles"));
        }
        let particles: Vec<Particle> = snapshot
            .particles
            .iter()
            .map(|p| Particle {
                position: p.position.map(clamp_unit),
                velocity: p.velocity,
                best_position: p.best_position.map(clamp_unit),
                best_fitness: p.best_fitness.unwrap_or(f64::NEG_INFINITY),
            })
            .collect();
        let mut swarm = Self {
            global_best_position: particles[0].best_position,
            global_best_fitness: f64::NEG_INFINITY,
            streams: (0..particles.len()).map(|i| particle_stream(seed, i)).collect(),
            particles,
            hyper,
            draw_mode: DrawMode::default(),
            seed,
        };
        swarm.refresh_global_best();
        Ok(swarm)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Re-evaluates every personal best and recomputes the global best from scratch.
    pub fn evaluate_bests<F>(&mut self, fitness: &F)
    where
        F: Fn(Position) -> f64 + Sync,
    {
        let values: Vec<f64> = self
            .particles
            .par_iter()
            .map(|p| sanitize(fitness(p.best_position)))
            .collect();
        for (p, v) in self.particles.iter_mut().zip(values) {
            p.best_fitness = v;
        }
        self.global_best_fitness = f64::NEG_INFINITY;
        self.global_best_position = self.particles[0].best_position;
        self.refresh_global_best();
    }

    /// Promotes the first strictly better personal best, scanning in particle order.
    fn refresh_global_best(&mut self) {
        for p in &self.particles {
            if p.best_fitness > self.global_best_fitness {
                self.global_best_fitness = p.best_fitness;
                self.global_best_position = p.best_position;
            }
        }
    }

    /// One synchronous iteration: move every particle against the current
    /// global best, evaluate the new positions, then update the bests.
    pub fn step<F>(&mut self, fitness: &F)
    where
        F: Fn(Position) -> f64 + Sync,
    {
        let PsoHyper { w, c1, c2 } = self.hyper;
        let g = self.global_best_position;
        for (p, rng) in self.particles.iter_mut().zip(&mut self.streams) {
            let (r1, r2): (Position, Position) = match self.draw_mode {
                DrawMode::Vector => {
                    let mut r1 = [0.0; 3];
                    let mut r2 = [0.0; 3];
                    for d in 0..3 {
                        r1[d] = rng.gen();
                        r2[d] = rng.gen();
                    }
                    (r1, r2)
                }
                DrawMode::Scalar => {
                    let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                    ([a; 3], [b; 3])
                }
            };
            for d in 0..3 {
                p.velocity[d] = w * p.velocity[d]
                    + r1[d] * c1 * (p.best_position[d] - p.position[d])
                    + r2[d] * c2 * (g[d] - p.position[d]);
                p.position[d] = clamp_unit(p.position[d] + p.velocity[d]);
            }
        }
        let values: Vec<f64> = self
            .particles
            .par_iter()
            .map(|p| sanitize(fitness(p.position)))
            .collect();
        for (p, v) in self.particles.iter_mut().zip(values) {
            if v > p.best_fitness {
                p.best_fitness = v;
                p.best_position = p.position;
            }
        }
        self.refresh_global_best();
    }

    pub fn snapshot(&self) -> SwarmSnapshot {
        SwarmSnapshot {
            seed: self.seed,
            hyper: self.hyper,
            particles: self
                .particles
                .iter()
                .map(|p| ParticleRecord {
                    position: p.position,
                    velocity: p.velocity,
                    best_position: p.best_position,
                    best_fitness: p.best_fitness.is_finite().then_some(p.best_fitness),
                })
                .collect(),
        }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Serialized swarm population, used for warm starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmSnapshot {
    pub seed: u64,
    pub hyper: PsoHyper,
    pub particles: Vec<ParticleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub position: Position,
    pub velocity: Position,
    pub best_position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_fitness: Option<f64>,
}

impl SwarmSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub hyper: PsoHyper,
    pub draw_mode: DrawMode,
    /// Warm starts keep the snapshot's personal-best fitness instead of
    /// re-evaluating it on the new training set.
    pub keep_snapshot_fitness: bool,
    /// Ignore the rule coordinate and sum over the whole window.
    pub full_neighborhood: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 30,
            iterations: 100,
            seed: 42,
            hyper: PsoHyper::default(),
            draw_mode: DrawMode::default(),
            keep_snapshot_fitness: false,
            full_neighborhood: false,
        }
    }
}

impl PsoConfig {
    pub fn decode(&self, position: Position, table: &CellTable) -> DetectorParams {
        let mut p = position;
        if self.full_neighborhood {
            p[2] = 1.0;
        }
        let params = decode_particle(p, table);
        debug_assert!(!self.full_neighborhood || params.rule() == max_rule(table.radius()));
        params
    }
}

/// Mean Dice score of the decoded detector over `train`.
///
/// Per-image scores are summed in slice order regardless of how they were computed.
pub fn batch_fitness(position: Position, train: &[Sample], table: &CellTable) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    params_fitness(&decode_particle(position, table), train)
}

/// Mean Dice score of fixed parameters over a non-empty set.
pub fn params_fitness(params: &DetectorParams, train: &[Sample]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let scores: Vec<f64> = train
        .par_iter()
        .map(|s| dsc(&crate::ca::detect_edges(&s.image, params), &s.truth))
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult {
    pub best_params: DetectorParams,
    pub best_position: Position,
    pub best_fitness: f64,
    pub final_population: SwarmSnapshot,
    /// Global best after the initial evaluation, then after every step.
    pub history: Vec<f64>,
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    best_params: ParamsRecord,
    best_position: Position,
    best_fitness: f64,
    history: &'a [f64],
}

impl OptimizationResult {
    /// JSON summary without the population (saved separately).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ResultRecord {
            best_params: self.best_params.record(),
            best_position: self.best_position,
            best_fitness: self.best_fitness,
            history: &self.history,
        })
        .expect("result serializes")
    }
}

fn check_train(train: &[Sample]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    Ok(())
}

fn run(mut swarm: Swarm, train: &[Sample], table: &CellTable, config: &PsoConfig, evaluate: bool) -> Result<OptimizationResult> {
    swarm.draw_mode = config.draw_mode;
    let fitness = |pos: Position| {
        params_fitness(&config.decode(pos, table), train).expect("training set validated")
    };
    if evaluate {
        swarm.evaluate_bests(&fitness);
    }
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(swarm.global_best_fitness);
    for _ in 0..config.iterations {
        swarm.step(&fitness);
        history.push(swarm.global_best_fitness);
    }
    Ok(OptimizationResult {
        best_params: config.decode(swarm.global_best_position, table),
        best_position: swarm.global_best_position,
        best_fitness: swarm.global_best_fitness,
        final_population: swarm.snapshot(),
        history,
    })
}

/// Cold-start optimization of the detector on `train`.
pub fn optimize(train: &[Sample], table: &CellTable, config: &PsoConfig) -> Result<OptimizationResult> {
    check_train(train)?;
    if config.iterations == 0 {
        return Err(Error::invalid("optimization needs at least one iteration"));
    }
    let swarm = Swarm::new(config.particles, config.seed, config.hyper)?;
    run(swarm, train, table, config, true)
}

/// Continues optimization from a saved population on a new training set.
///
/// Positions, velocities and personal-best positions come from the snapshot.
/// Unless `keep_snapshot_fitness` is set, personal-best fitness is recomputed
/// on `train` before the first step.
pub fn warm_start_optimize(
    snapshot: &SwarmSnapshot,
    train: &[Sample],
    table: &CellTable,
    config: &PsoConfig,
) -> Result<OptimizationResult> {
    check_train(train)?;
    let swarm = Swarm::from_snapshot(snapshot, config.seed, config.hyper)?;
    let stale = config.keep_snapshot_fitness
        && snapshot.particles.iter().all(|p| p.best_fitness.is_some());
    run(swarm, train, table, config, !stale)
}
