//! Heritable genome: a block tree for the body and a typed neuron graph for the brain.
//!
//! The genome is a set of flat gene lists. Blocks form a tree through parent
//! indices (always smaller than the block's own index, block 0 is the root).
//! Neurons read from sensors, other neurons or a constant through three
//! weighted input slots, and connection genes route neuron outputs to joint
//! motors.
//!
//! Mutation works per site: every scalar or categorical field of every gene is
//! one site, mutated independently with the given rate.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::physsim::{SimError, WorldConfig};
use crate::rng::{stream, StreamRng};

pub const SCHEMA_VERSION: u32 = 1;

pub const DIM_RANGE: (f64, f64) = (0.05, 2.0);
pub const ANCHOR_RANGE: (f64, f64) = (0.0, 1.0);
pub const AXIS_RANGE: (f64, f64) = (-1.0, 1.0);
pub const LIMIT_LO_RANGE: (f64, f64) = (-PI, -0.05);
pub const LIMIT_HI_RANGE: (f64, f64) = (0.05, PI);
pub const TORQUE_RANGE: (f64, f64) = (1.0, 400.0);
pub const PARAM_RANGE: (f64, f64) = (-5.0, 5.0);
pub const WEIGHT_RANGE: (f64, f64) = (-5.0, 5.0);

/// Sites contributed by one block gene: parent, dims(3), anchor(2), axis(3), limits(2), torque.
pub const BLOCK_SITES: usize = 12;
/// Sites contributed by one neuron gene: kind, params(3), inputs(3 x source+weight).
pub const NEURON_SITES: usize = 10;
/// Sites contributed by one connection gene: source neuron, target joint.
pub const CONNECTION_SITES: usize = 2;

/// Sensor slots are laid out as `[target angle, target distance, contact per block..., angle per joint...]`.
pub const SENSOR_TARGET_ANGLE: usize = 0;
pub const SENSOR_TARGET_DISTANCE: usize = 1;

const RANDOM_RETRIES: usize = 1000;
const REPAIR_STEPS: usize = 64;

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("degenerate genome: {0}")]
    Degenerate(String),
    #[error("unsupported genome schema version {0}")]
    UnsupportedSchema(u32),
    #[error("genome io: {0}")]
    Io(#[from] std::io::Error),
    #[error("genome parse: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronKind {
    Sum,
    Product,
    Divide,
    SumThreshold,
    GreaterThan,
    SignOf,
    Min,
    Max,
    Abs,
    If,
    Interpolate,
    Sin,
    Cos,
    Atan,
    Log,
    Exp,
    Sigmoid,
    Integrate,
    Differentiate,
    Smooth,
    Memory,
    Wave,
    Saw,
    Constant,
}

impl NeuronKind {
    pub const ALL: [NeuronKind; 24] = [
        NeuronKind::Sum,
        NeuronKind::Product,
        NeuronKind::Divide,
        NeuronKind::SumThreshold,
        NeuronKind::GreaterThan,
        NeuronKind::SignOf,
        NeuronKind::Min,
        NeuronKind::Max,
        NeuronKind::Abs,
        NeuronKind::If,
        NeuronKind::Interpolate,
        NeuronKind::Sin,
        NeuronKind::Cos,
        NeuronKind::Atan,
        NeuronKind::Log,
        NeuronKind::Exp,
        NeuronKind::Sigmoid,
        NeuronKind::Integrate,
        NeuronKind::Differentiate,
        NeuronKind::Smooth,
        NeuronKind::Memory,
        NeuronKind::Wave,
        NeuronKind::Saw,
        NeuronKind::Constant,
    ];

    pub fn is_stateful(self) -> bool {
        matches!(
            self,
            NeuronKind::Integrate
                | NeuronKind::Differentiate
                | NeuronKind::Smooth
                | NeuronKind::Memory
                | NeuronKind::Wave
                | NeuronKind::Saw
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Sensor(usize),
    Neuron(usize),
    /// Contributes 1.0 before weighting, i.e. the weight itself.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub source: Source,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockGene {
    pub parent: usize,
    pub dims: [f64; 3],
    pub joint_anchor: [f64; 2],
    pub joint_axis: [f64; 3],
    pub joint_limits: [f64; 2],
    pub max_torque: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronGene {
    pub kind: NeuronKind,
    pub params: [f64; 3],
    pub inputs: [Input; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub source: usize,
    pub joint: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub schema_version: u32,
    pub blocks: Vec<BlockGene>,
    pub neurons: Vec<NeuronGene>,
    pub wiring: Vec<ConnectionGene>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenomeLimits {
    pub min_blocks: usize,
    pub max_blocks: usize,
    pub min_neurons: usize,
    pub max_neurons: usize,
}

impl Default for GenomeLimits {
    fn default() -> Self {
        Self {
            min_blocks: 2,
            max_blocks: 8,
            min_neurons: 8,
            max_neurons: 32,
        }
    }
}

/// Number of sensor slots for a body with `blocks` blocks.
pub fn sensor_count(blocks: usize) -> usize {
    2 + blocks + blocks.saturating_sub(1)
}

fn uniform(rng: &mut StreamRng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn jitter(rng: &mut StreamRng, x: f64, (lo, hi): (f64, f64)) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (x + 0.1 * (hi - lo) * z).clamp(lo, hi)
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n < 1e-9 || !n.is_finite() {
        [0.0, 0.0, 1.0]
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

fn random_source(rng: &mut StreamRng, sensors: usize, neurons: usize) -> Source {
    let k = rng.random_range(0..sensors + neurons + 1);
    if k < sensors {
        Source::Sensor(k)
    } else if k < sensors + neurons {
        Source::Neuron(k - sensors)
    } else {
        Source::Constant
    }
}

impl BlockGene {
    fn random(rng: &mut StreamRng, parent: usize) -> Self {
        Self {
            parent,
            dims: [
                uniform(rng, (0.1, 1.0)),
                uniform(rng, (0.1, 1.0)),
                uniform(rng, (0.1, 1.0)),
            ],
            joint_anchor: [uniform(rng, ANCHOR_RANGE), uniform(rng, ANCHOR_RANGE)],
            joint_axis: normalized([
                uniform(rng, AXIS_RANGE),
                uniform(rng, AXIS_RANGE),
                uniform(rng, AXIS_RANGE),
            ]),
            joint_limits: [uniform(rng, LIMIT_LO_RANGE), uniform(rng, LIMIT_HI_RANGE)],
            max_torque: uniform(rng, TORQUE_RANGE),
        }
    }
}

impl NeuronGene {
    fn random(rng: &mut StreamRng, sensors: usize, neurons: usize) -> Self {
        let kind = NeuronKind::ALL[rng.random_range(0..NeuronKind::ALL.len())];
        let params = [
            uniform(rng, PARAM_RANGE),
            uniform(rng, PARAM_RANGE),
            uniform(rng, PARAM_RANGE),
        ];
        let mut input = || Input {
            source: random_source(rng, sensors, neurons),
            weight: uniform(rng, WEIGHT_RANGE),
        };
        let inputs = [input(), input(), input()];
        Self { kind, params, inputs }
    }
}

/// Builds a random genome that develops into a structurally valid organism.
pub fn random_genome(rng_seed: u64, limits: &GenomeLimits) -> Result<Genome, GenomeError> {
    let mut rng = stream(&[rng_seed, 0x6e6f6d65]);
    let min_blocks = limits.min_blocks.max(1);
    let max_blocks = limits.max_blocks.max(min_blocks);
    let max_neurons = limits.max_neurons.max(limits.min_neurons);
    for _ in 0..RANDOM_RETRIES {
        let n_blocks = rng.random_range(min_blocks..=max_blocks);
        let n_neurons = rng.random_range(limits.min_neurons..=max_neurons);
        let sensors = sensor_count(n_blocks);
        let blocks: Vec<BlockGene> = (0..n_blocks)
            .map(|i| {
                let parent = if i == 0 { 0 } else { rng.random_range(0..i) };
                BlockGene::random(&mut rng, parent)
            })
            .collect();
        let neurons: Vec<NeuronGene> = (0..n_neurons)
            .map(|_| NeuronGene::random(&mut rng, sensors, n_neurons))
            .collect();
        let wiring: Vec<ConnectionGene> = if n_neurons == 0 {
            Vec::new()
        } else {
            (0..n_blocks - 1)
                .map(|joint| ConnectionGene {
                    source: rng.random_range(0..n_neurons),
                    joint,
                })
                .collect()
        };
        let genome = Genome {
            schema_version: SCHEMA_VERSION,
            blocks,
            neurons,
            wiring,
        };
        let Ok(organism) = genome.develop() else {
            continue;
        };
        let report = structural_report(&organism);
        if report.valid || (n_blocks == 1 && min_blocks == 1 && report.reasons == [InvalidReason::OnlyOneBlock]) {
            return Ok(genome);
        }
    }
    Err(GenomeError::Degenerate(format!(
        "no structurally valid genome after {RANDOM_RETRIES} attempts"
    )))
}

impl Genome {
    pub fn sensor_count(&self) -> usize {
        sensor_count(self.blocks.len())
    }

    pub fn joint_count(&self) -> usize {
        self.blocks.len().saturating_sub(1)
    }

    /// Total count of independently mutable sites.
    pub fn sites(&self) -> usize {
        self.blocks.len() * BLOCK_SITES + self.neurons.len() * NEURON_SITES + self.wiring.len() * CONNECTION_SITES
    }

    /// Content hash over the canonical JSON encoding.
    pub fn content_hash(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("genome serializes");
        Sha256::digest(&bytes).into()
    }

    /// Short hex identifier derived from the content hash.
    pub fn content_id(&self) -> String {
        self.content_hash()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First eight bytes of the content hash, used as a deterministic tie breaker.
    pub fn hash_key(&self) -> u64 {
        let h = self.content_hash();
        u64::from_be_bytes(h[..8].try_into().unwrap())
    }

    pub fn mutate(&self, rng_seed: u64, rate: f64) -> Genome {
        self.mutate_counted(rng_seed, rate).0
    }

    /// Mutates each site independently with probability `rate` and reports how many sites fired.
    pub fn mutate_counted(&self, rng_seed: u64, rate: f64) -> (Genome, usize) {
        let rate = rate.clamp(0.0, 1.0);
        let mut rng = stream(&[rng_seed, 0x6d757461]);
        let mut g = self.clone();
        if rate == 0.0 {
            return (g, 0);
        }
        let sensors = g.sensor_count();
        let n_neurons = g.neurons.len();
        let joints = g.joint_count();
        let mut fired = 0usize;
        let mut hit = |rng: &mut StreamRng| {
            let f = rng.random::<f64>() < rate;
            fired += f as usize;
            f
        };

        for (i, block) in g.blocks.iter_mut().enumerate() {
            if hit(&mut rng) {
                block.parent = if i == 0 { 0 } else { rng.random_range(0..i) };
            }
            for d in block.dims.iter_mut() {
                if hit(&mut rng) {
                    *d = jitter(&mut rng, *d, DIM_RANGE);
                }
            }
            for a in block.joint_anchor.iter_mut() {
                if hit(&mut rng) {
                    *a = jitter(&mut rng, *a, ANCHOR_RANGE);
                }
            }
            let mut axis_changed = false;
            for c in block.joint_axis.iter_mut() {
                if hit(&mut rng) {
                    *c = jitter(&mut rng, *c, AXIS_RANGE);
                    axis_changed = true;
                }
            }
            if axis_changed {
                block.joint_axis = normalized(block.joint_axis);
            }
            if hit(&mut rng) {
                block.joint_limits[0] = jitter(&mut rng, block.joint_limits[0], LIMIT_LO_RANGE);
            }
            if hit(&mut rng) {
                block.joint_limits[1] = jitter(&mut rng, block.joint_limits[1], LIMIT_HI_RANGE);
            }
            if hit(&mut rng) {
                block.max_torque = jitter(&mut rng, block.max_torque, TORQUE_RANGE);
            }
        }

        for neuron in g.neurons.iter_mut() {
            if hit(&mut rng) {
                neuron.kind = NeuronKind::ALL[rng.random_range(0..NeuronKind::ALL.len())];
            }
            for p in neuron.params.iter_mut() {
                if hit(&mut rng) {
                    *p = jitter(&mut rng, *p, PARAM_RANGE);
                }
            }
            for input in neuron.inputs.iter_mut() {
                if hit(&mut rng) {
                    input.source = random_source(&mut rng, sensors, n_neurons);
                }
                if hit(&mut rng) {
                    input.weight = jitter(&mut rng, input.weight, WEIGHT_RANGE);
                }
            }
        }

        for conn in g.wiring.iter_mut() {
            if hit(&mut rng) && n_neurons > 0 {
                conn.source = rng.random_range(0..n_neurons);
            }
            if hit(&mut rng) && joints > 0 {
                conn.joint = rng.random_range(0..joints);
            }
        }
        (g, fired)
    }

    /// Single-point crossover per gene list at random points, followed by repair.
    pub fn recombine(&self, other: &Genome, rng_seed: u64) -> Result<Genome, GenomeError> {
        let mut rng = stream(&[rng_seed, 0x72656372]);
        let mut point = |la: usize, lb: usize| rng.random_range(0..=la.max(lb));
        let points = [
            point(self.blocks.len(), other.blocks.len()),
            point(self.neurons.len(), other.neurons.len()),
            point(self.wiring.len(), other.wiring.len()),
        ];
        self.recombine_at(other, points)
    }

    /// Crossover at explicit points `[blocks, neurons, wiring]`: child takes `a[..k]` then `b[k..]`.
    pub fn recombine_at(&self, other: &Genome, points: [usize; 3]) -> Result<Genome, GenomeError> {
        fn splice<T: Clone>(a: &[T], b: &[T], k: usize) -> Vec<T> {
            let mut out: Vec<T> = a[..k.min(a.len())].to_vec();
            out.extend_from_slice(&b[k.min(b.len())..]);
            out
        }
        let mut child = Genome {
            schema_version: SCHEMA_VERSION,
            blocks: splice(&self.blocks, &other.blocks, points[0]),
            neurons: splice(&self.neurons, &other.neurons, points[1]),
            wiring: splice(&self.wiring, &other.wiring, points[2]),
        };
        child.repair()?;
        Ok(child)
    }

    /// Restores the structural invariants after a list splice.
    pub fn repair(&mut self) -> Result<(), GenomeError> {
        if self.blocks.is_empty() {
            return Err(GenomeError::Degenerate("no blocks".into()));
        }
        self.blocks[0].parent = 0;
        for i in 1..self.blocks.len() {
            let mut p = self.blocks[i].parent;
            let mut steps = 0;
            // Walk up the parent chain until an index earlier than `i` is found.
            while p >= i {
                if steps >= REPAIR_STEPS || p >= self.blocks.len() {
                    p = i - 1;
                    break;
                }
                let next = self.blocks[p].parent;
                if next == p {
                    p = i - 1;
                    break;
                }
                p = next;
                steps += 1;
            }
            self.blocks[i].parent = p;
        }
        let sensors = self.sensor_count();
        let n_neurons = self.neurons.len();
        for neuron in self.neurons.iter_mut() {
            for input in neuron.inputs.iter_mut() {
                input.source = match input.source {
                    Source::Sensor(k) => Source::Sensor(k % sensors),
                    Source::Neuron(k) => Source::Neuron(k % n_neurons),
                    Source::Constant => Source::Constant,
                };
            }
        }
        let joints = self.joint_count();
        if joints == 0 || n_neurons == 0 {
            self.wiring.clear();
        } else {
            for conn in self.wiring.iter_mut() {
                conn.source %= n_neurons;
                conn.joint %= joints;
            }
        }
        Ok(())
    }

    /// Checks the tree and reference invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.blocks.is_empty() {
            return Err("no blocks".into());
        }
        let sensors = self.sensor_count();
        let joints = self.joint_count();
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 && b.parent >= i {
                return Err(format!("block {i} has parent {}", b.parent));
            }
            for d in b.dims {
                if !(DIM_RANGE.0..=DIM_RANGE.1).contains(&d) {
                    return Err(format!("block {i} extent {d} out of range"));
                }
            }
            let [lo, hi] = b.joint_limits;
            if !(lo >= -PI && hi <= PI && lo < hi) {
                return Err(format!("block {i} limits {lo}..{hi}"));
            }
            let n = b.joint_axis.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(format!("block {i} axis not unit ({n})"));
            }
            if !(TORQUE_RANGE.0..=TORQUE_RANGE.1).contains(&b.max_torque) {
                return Err(format!("block {i} torque {}", b.max_torque));
            }
        }
        for (i, n) in self.neurons.iter().enumerate() {
            for input in &n.inputs {
                match input.source {
                    Source::Sensor(k) if k >= sensors => return Err(format!("neuron {i} reads missing sensor {k}")),
                    Source::Neuron(k) if k >= self.neurons.len() => {
                        return Err(format!("neuron {i} reads missing neuron {k}"))
                    }
                    _ => {}
                }
            }
        }
        for c in &self.wiring {
            if c.joint >= joints || c.source >= self.neurons.len() {
                return Err(format!("connection {c:?} dangles"));
            }
        }
        Ok(())
    }

    /// Develops the genome into a placed body and brain.
    pub fn develop(&self) -> Result<Organism, GenomeError> {
        if self.blocks.is_empty() {
            return Err(GenomeError::Degenerate("no blocks".into()));
        }
        let mut blocks: Vec<BlockBody> = Vec::with_capacity(self.blocks.len());
        let mut joints = Vec::with_capacity(self.blocks.len().saturating_sub(1));
        for (i, gene) in self.blocks.iter().enumerate() {
            if gene.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(GenomeError::Degenerate(format!("block {i} has zero volume")));
            }
            let half = gene.dims.map(|d| 0.5 * d);
            if i == 0 {
                blocks.push(BlockBody {
                    parent: None,
                    half_extents: half,
                    center: [0.0; 3],
                });
                continue;
            }
            if gene.parent >= i {
                return Err(GenomeError::Degenerate(format!(
                    "block {i} parent {} breaks the tree",
                    gene.parent
                )));
            }
            let parent = &blocks[gene.parent];
            let (anchor, center) = attach(parent, half, gene.joint_anchor);
            blocks.push(BlockBody {
                parent: Some(gene.parent),
                half_extents: half,
                center,
            });
            joints.push(JointSpec {
                parent: gene.parent,
                child: i,
                anchor,
                axis: normalized(gene.joint_axis),
                limits: gene.joint_limits,
                max_torque: gene.max_torque,
            });
        }
        Ok(Organism {
            blocks,
            joints,
            neurons: self.neurons.clone(),
            wiring: self.wiring.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("genome serializes")
    }

    pub fn from_json(s: &str) -> Result<Genome, GenomeError> {
        let g: Genome = serde_json::from_str(s)?;
        if g.schema_version != SCHEMA_VERSION {
            return Err(GenomeError::UnsupportedSchema(g.schema_version));
        }
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GenomeError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Genome, GenomeError> {
        Genome::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Places a child of half extents `half` on the side faces of `parent`.
///
/// `anchor[0]` walks the perimeter of the parent's horizontal cross-section
/// (+x, +y, -x, -y faces in turn) and `anchor[1]` selects the height on that
/// face. Returns the joint anchor point and the child's center.
fn attach(parent: &BlockBody, half: [f64; 3], anchor: [f64; 2]) -> ([f64; 3], [f64; 3]) {
    let [hx, hy, hz] = parent.half_extents;
    let c = parent.center;
    let u = anchor[0].clamp(0.0, 1.0) * 4.0;
    let face = (u.floor() as usize).min(3);
    let s = 2.0 * (u - face as f64) - 1.0;
    let z = c[2] + (2.0 * anchor[1].clamp(0.0, 1.0) - 1.0) * hz;
    let (point, normal): ([f64; 3], [f64; 3]) = match face {
        0 => ([c[0] + hx, c[1] + s * hy, z], [1.0, 0.0, 0.0]),
        1 => ([c[0] - s * hx, c[1] + hy, z], [0.0, 1.0, 0.0]),
        2 => ([c[0] - hx, c[1] - s * hy, z], [-1.0, 0.0, 0.0]),
        _ => ([c[0] + s * hx, c[1] - hy, z], [0.0, -1.0, 0.0]),
    };
    let reach = normal[0].abs() * half[0] + normal[1].abs() * half[1];
    let center = [point[0] + normal[0] * reach, point[1] + normal[1] * reach, point[2]];
    (point, center)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBody {
    pub parent: Option<usize>,
    pub half_extents: [f64; 3],
    /// Rest position in the body frame (root at the origin).
    pub center: [f64; 3],
}

/// Hinge joint between block `parent` and block `child`; joint `j` always drives block `j + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub parent: usize,
    pub child: usize,
    pub anchor: [f64; 3],
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    pub max_torque: f64,
}

/// Developed phenotype: rest-pose body plan plus the brain it will execute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Organism {
    pub blocks: Vec<BlockBody>,
    pub joints: Vec<JointSpec>,
    pub neurons: Vec<NeuronGene>,
    pub wiring: Vec<ConnectionGene>,
}

impl Organism {
    pub fn sensor_count(&self) -> usize {
        sensor_count(self.blocks.len())
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.blocks[a].parent == Some(b) || self.blocks[b].parent == Some(a)
    }

    /// Non-adjacent block pairs whose rest-pose boxes overlap.
    pub fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.blocks.len() {
            for b in a + 1..self.blocks.len() {
                if self.adjacent(a, b) {
                    continue;
                }
                let (ba, bb) = (&self.blocks[a], &self.blocks[b]);
                let overlap = (0..3)
                    .all(|k| (ba.center[k] - bb.center[k]).abs() < ba.half_extents[k] + bb.half_extents[k] - 1e-9);
                if overlap {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvalidReason {
    OnlyOneBlock,
    MotorsDisconnected,
    SensorsDisconnected,
    InitialInterpenetration,
    Unstable,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub reasons: Vec<InvalidReason>,
}

impl ValidityReport {
    fn from_reasons(reasons: Vec<InvalidReason>) -> Self {
        Self {
            valid: reasons.is_empty(),
            reasons,
        }
    }
}

/// Checks that need no simulation: block count, brain connectivity and rest-pose overlap.
pub fn structural_report(organism: &Organism) -> ValidityReport {
    let mut reasons = Vec::new();
    if organism.blocks.len() <= 1 {
        reasons.push(InvalidReason::OnlyOneBlock);
    }
    let n = organism.neurons.len();
    let motor_sources: Vec<usize> = organism
        .wiring
        .iter()
        .filter(|c| c.source < n && c.joint < organism.joint_count())
        .map(|c| c.source)
        .collect();
    if motor_sources.is_empty() {
        if organism.blocks.len() > 1 {
            reasons.push(InvalidReason::MotorsDisconnected);
        }
    } else {
        // Neurons that lie on some path to a motor.
        let mut on_path = vec![false; n];
        let mut queue: VecDeque<usize> = motor_sources.into_iter().collect();
        while let Some(i) = queue.pop_front() {
            if on_path[i] {
                continue;
            }
            on_path[i] = true;
            for input in &organism.neurons[i].inputs {
                if let Source::Neuron(k) = input.source {
                    if k < n && !on_path[k] {
                        queue.push_back(k);
                    }
                }
            }
        }
        let sensed = (0..n).any(|i| {
            on_path[i]
                && organism.neurons[i]
                    .inputs
                    .iter()
                    .any(|inp| matches!(inp.source, Source::Sensor(_)))
        });
        if !sensed {
            reasons.push(InvalidReason::SensorsDisconnected);
        }
    }
    if !organism.overlapping_pairs().is_empty() {
        reasons.push(InvalidReason::InitialInterpenetration);
    }
    ValidityReport::from_reasons(reasons)
}

/// Full validity test: structural checks plus a short passive probe in a fresh world.
pub fn validate(organism: &Organism, world_probe: &WorldConfig) -> ValidityReport {
    let mut report = structural_report(organism);
    if report.reasons.contains(&InvalidReason::InitialInterpenetration) {
        return report;
    }
    match world_probe.probe(organism) {
        Ok(()) => {}
        Err(SimError::SpawnOverlap) => report.reasons.push(InvalidReason::InitialInterpenetration),
        Err(_) => report.reasons.push(InvalidReason::Unstable),
    }
    report.valid = report.reasons.is_empty();
    report
}
