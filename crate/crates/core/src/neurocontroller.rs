//! Executes the typed neural network once per control step.

use serde::{Deserialize, Serialize};

use crate::morphogenome::{Input, NeuronKind, Organism, Source, SENSOR_TARGET_ANGLE, SENSOR_TARGET_DISTANCE};

pub const DEFAULT_DT: f64 = 0.02;
const VALUE_BOUND: f64 = 1e6;

/// Sensor readings delivered to the controller before each step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub contact: Vec<bool>,
    pub joint_angle: Vec<f64>,
    /// Signed angle in (-pi, pi] from the forward vector to the target, about +z.
    pub target_angle: f64,
    pub target_distance: f64,
}

impl SensorFrame {
    /// Reads a sensor slot using the genome's sensor layout.
    pub fn value(&self, slot: usize) -> f64 {
        match slot {
            SENSOR_TARGET_ANGLE => self.target_angle,
            SENSOR_TARGET_DISTANCE => self.target_distance,
            k => {
                let k = k - 2;
                if k < self.contact.len() {
                    self.contact[k] as u8 as f64
                } else {
                    self.joint_angle.get(k - self.contact.len()).copied().unwrap_or(0.0)
                }
            }
        }
    }
}

/// Desired joint velocity per joint, each in [-1, 1].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotorCommands(pub Vec<f64>);

fn sanitize(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-VALUE_BOUND, VALUE_BOUND)
    }
}

/// Evaluates one neuron kind. Returns `(value, new_state)`.
///
/// Inputs are already weighted. Stateless kinds return `state` unchanged.
pub fn eval_kind(kind: NeuronKind, x: [f64; 3], params: [f64; 3], state: f64, t: f64, dt: f64) -> (f64, f64) {
    use std::f64::consts::TAU;
    let [x0, x1, x2] = x;
    let p0 = params[0];
    let (value, new_state) = match kind {
        NeuronKind::Sum => (x0 + x1 + x2, state),
        NeuronKind::Product => (x0 * x1 * x2, state),
        NeuronKind::Divide => (if x1.abs() > 1e-6 { x0 / x1 } else { 0.0 }, state),
        NeuronKind::SumThreshold => ((x0 + x1 + x2 > p0) as u8 as f64, state),
        NeuronKind::GreaterThan => ((x0 > x1) as u8 as f64, state),
        NeuronKind::SignOf => {
            let s = if x0 > 0.0 {
                1.0
            } else if x0 < 0.0 {
                -1.0
            } else {
                0.0
            };
            (s * x1.abs(), state)
        }
        NeuronKind::Min => (x0.min(x1).min(x2), state),
        NeuronKind::Max => (x0.max(x1).max(x2), state),
        NeuronKind::Abs => (x0.abs(), state),
        NeuronKind::If => (if x0 > 0.0 { x1 } else { x2 }, state),
        NeuronKind::Interpolate => (x0 + x2.clamp(0.0, 1.0) * (x1 - x0), state),
        NeuronKind::Sin => (x0.sin(), state),
        NeuronKind::Cos => (x0.cos(), state),
        NeuronKind::Atan => (x0.atan(), state),
        NeuronKind::Log => ((x0.abs() + 1e-9).ln(), state),
        NeuronKind::Exp => (x0.clamp(-30.0, 30.0).exp(), state),
        NeuronKind::Sigmoid => (1.0 / (1.0 + (-x0).exp()), state),
        NeuronKind::Integrate => {
            let s = state + x0 * dt;
            (s, s)
        }
        NeuronKind::Differentiate => ((x0 - state) / dt, x0),
        NeuronKind::Smooth => {
            // Rate outside [0, 1] would overshoot and diverge.
            let s = state + p0.clamp(0.0, 1.0) * (x0 - state);
            (s, s)
        }
        NeuronKind::Memory => (state, if x1 > 0.0 { x0 } else { state }),
        NeuronKind::Wave => {
            let v = (TAU * p0 * t + params[1]).sin();
            (v, v)
        }
        NeuronKind::Saw => {
            let phase = p0 * t + params[1];
            let v = (phase - phase.floor()) * 2.0 - 1.0;
            (v, v)
        }
        NeuronKind::Constant => (p0, state),
    };
    (sanitize(value), sanitize(new_state))
}

#[derive(Clone, Debug, PartialEq)]
struct Node {
    kind: NeuronKind,
    params: [f64; 3],
    inputs: [Input; 3],
    state: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    nodes: Vec<Node>,
    order: Vec<usize>,
    /// Latest output of each neuron; nodes not yet evaluated this step expose last step's value.
    values: Vec<f64>,
    motor_map: Vec<Vec<usize>>,
    t: f64,
}

impl Controller {
    pub fn build(organism: &Organism) -> Controller {
        let nodes: Vec<Node> = organism
            .neurons
            .iter()
            .map(|g| Node {
                kind: g.kind,
                params: g.params,
                inputs: g.inputs,
                state: 0.0,
            })
            .collect();
        let order = evaluation_order(&nodes);
        let mut motor_map = vec![Vec::new(); organism.joint_count()];
        for c in &organism.wiring {
            if c.joint < motor_map.len() && c.source < nodes.len() {
                motor_map[c.joint].push(c.source);
            }
        }
        let n = nodes.len();
        Controller {
            nodes,
            order,
            values: vec![0.0; n],
            motor_map,
            t: 0.0,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn states(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.state).collect()
    }

    pub fn outputs(&self) -> &[f64] {
        &self.values
    }

    pub fn joint_count(&self) -> usize {
        self.motor_map.len()
    }

    pub fn step(&mut self, frame: &SensorFrame, dt: f64) -> MotorCommands {
        for &i in &self.order {
            let node = &self.nodes[i];
            let x = node.inputs.map(|input| {
                let raw = match input.source {
                    Source::Sensor(k) => frame.value(k),
                    Source::Neuron(k) => self.values.get(k).copied().unwrap_or(0.0),
                    Source::Constant => 1.0,
                };
                sanitize(raw * input.weight)
            });
            let (v, s) = eval_kind(node.kind, x, node.params, node.state, self.t, dt);
            self.nodes[i].state = s;
            self.values[i] = v;
        }
        self.t += dt;
        MotorCommands(
            self.motor_map
                .iter()
                .map(|sources| {
                    let sum: f64 = sources.iter().map(|&s| self.values[s]).sum();
                    if sum.is_finite() {
                        sum.clamp(-1.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    pub fn reset(&mut self) {
        self.t = 0.0;
        for n in self.nodes.iter_mut() {
            n.state = 0.0;
        }
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Depth-first post-order over neuron dependencies. Edges closing a cycle are
/// left pointing backwards in the order, so they read the previous step's value.
fn evaluation_order(nodes: &[Node]) -> Vec<usize> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = nodes.len();
    let mut mark = vec![Mark::New; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // (node, next input slot to inspect)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Open;
        while let Some(&mut (node, ref mut slot)) = stack.last_mut() {
            if *slot < 3 {
                let input = nodes[node].inputs[*slot];
                *slot += 1;
                if let Source::Neuron(k) = input.source {
                    if k < n && mark[k] == Mark::New {
                        mark[k] = Mark::Open;
                        stack.push((k, 0));
                    }
                }
            } else {
                mark[node] = Mark::Done;
                order.push(node);
                stack.pop();
            }
        }
    }
    order
}
