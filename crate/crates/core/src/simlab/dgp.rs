//! Data-generating processes for the single time-point (1a, 1b, 1c) and
//! adaptive-design (2a, 2b) scenarios.
//!
//! Blocks `t = 1..=burn_in` come from the exogenous burn-in law; later
//! blocks follow the conditional formulas. Within a block the draw order is
//! `A, Y, W1, W2[, W3]`, so a seed fixes the whole series. The series length
//! `n` counts the burn-in blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Block, ContextSpec, FeatureExpr, Schema, TimeSeries};
use crate::error::{Error, Result};
use crate::learners::loss::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    Sim1a,
    Sim1b,
    Sim1c,
    Sim2a,
    Sim2b,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] = [DgpKind::Sim1a, DgpKind::Sim1b, DgpKind::Sim1c, DgpKind::Sim2a, DgpKind::Sim2b];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Sim1a => "sim1a",
            DgpKind::Sim1b => "sim1b",
            DgpKind::Sim1c => "sim1c",
            DgpKind::Sim2a => "sim2a",
            DgpKind::Sim2b => "sim2b",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        DgpKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown DGP `{name}` (expected one of sim1a, sim1b, sim1c, sim2a, sim2b)")))
    }

    pub fn burn_in(self) -> usize {
        match self {
            DgpKind::Sim1a | DgpKind::Sim2a | DgpKind::Sim2b => 4,
            DgpKind::Sim1b => 7,
            DgpKind::Sim1c => 6,
        }
    }

    fn has_w3(self) -> bool {
        self == DgpKind::Sim1a
    }

    /// Known-g schema `t,a,y,w1,w2[,w3],g_prob`.
    pub fn schema(self) -> Schema {
        let covs: &[&str] = if self.has_w3() { &["w1", "w2", "w3"] } else { &["w1", "w2"] };
        Schema::simple(covs.iter().copied()).with_known_g()
    }

    /// Context holding exactly the lagged terms of the treatment and
    /// outcome formulas, so that main-effects GLMs are correctly specified.
    pub fn context_preset(self) -> ContextSpec {
        let b = self.burn_in();
        match self {
            DgpKind::Sim1a => ContextSpec::new(b)
                .lag("w1", &[1, 2])
                .lag("w2", &[1])
                .lag("w3", &[1, 2])
                .lag("y", &[1])
                .lag("a", &[1]),
            DgpKind::Sim1b => ContextSpec::new(b)
                .lag("a", &[1, 5])
                .lag("y", &[1, 3])
                .lag("w1", &[1, 7])
                .lag("w2", &[1]),
            DgpKind::Sim1c => ContextSpec::new(b)
                .lag("a", &[1])
                .lag("w1", &[2])
                .derived(
                    "sin_w2l2_al3",
                    FeatureExpr::Sin(Box::new(FeatureExpr::Product(vec![
                        FeatureExpr::lag("w2", 2),
                        FeatureExpr::lag("a", 3),
                    ]))),
                )
                .derived("w1l1_al2", FeatureExpr::Product(vec![FeatureExpr::lag("w1", 1), FeatureExpr::lag("a", 2)]))
                .derived(
                    "sin_w2l4_al3_cos_w2l6",
                    FeatureExpr::Product(vec![
                        FeatureExpr::Sin(Box::new(FeatureExpr::lag("w2", 4))),
                        FeatureExpr::lag("a", 3),
                        FeatureExpr::Cos(Box::new(FeatureExpr::lag("w2", 6))),
                    ]),
                )
                .derived("w2l5_pos", FeatureExpr::Positive(Box::new(FeatureExpr::lag("w2", 5)))),
            DgpKind::Sim2a => ContextSpec::new(b).lag("a", &[1]).lag("y", &[1]).lag("w1", &[1]).lag("w2", &[1]),
            DgpKind::Sim2b => ContextSpec::new(b).lag("a", &[1]).lag("y", &[1, 3]).lag("w1", &[1, 2, 4]).lag("w2", &[2]),
        }
    }
}

/// Read access to the blocks already drawn, by lag from the next time.
struct Past<'a>(&'a [Block]);

impl Past<'_> {
    fn a(&self, k: usize) -> f64 {
        f64::from(self.0[self.0.len() - k].a[0])
    }
    fn y(&self, k: usize) -> f64 {
        self.0[self.0.len() - k].y
    }
    fn w(&self, j: usize, k: usize) -> f64 {
        self.0[self.0.len() - k].w[j]
    }
}

/// `P(A(t) = 1 | past)` under the scenario's own treatment mechanism, for a
/// block after the burn-in.
pub fn treatment_prob(kind: DgpKind, past: &[Block]) -> f64 {
    let p = Past(past);
    match kind {
        DgpKind::Sim1a => expit(0.25 * p.w(0, 1) - 0.2 * p.w(1, 1) + 0.3 * p.y(1) - 0.2 * p.a(1) + 0.2 * p.w(2, 2)),
        DgpKind::Sim1c => expit(0.7 * p.w(0, 2) - 0.3 * p.a(1) + 0.2 * (p.w(1, 2) * p.a(3)).sin()),
        DgpKind::Sim1b | DgpKind::Sim2a | DgpKind::Sim2b => 0.5,
    }
}

/// `P(Y(t) = 1 | A(t) = a, past)` for a block after the burn-in.
pub fn outcome_prob(kind: DgpKind, past: &[Block], a: u8) -> f64 {
    let p = Past(past);
    let a = f64::from(a);
    match kind {
        DgpKind::Sim1a => expit(
            0.3 - 0.8 * p.w(0, 1) + 0.1 * p.w(1, 1) + 0.2 * p.w(2, 1) + a - 0.5 * p.w(0, 2) + 0.2 * p.w(2, 2),
        ),
        DgpKind::Sim1b => expit(
            1.5 * a - p.a(1) + 0.5 * p.y(1) - 1.1 * p.w(0, 1) + 0.7 * p.y(3) - p.a(5) + p.w(0, 7),
        ),
        DgpKind::Sim1c => {
            let pos = if p.w(1, 5) > 0.0 { 1.0 } else { 0.0 };
            expit(
                1.5 * a - (p.w(0, 1) * p.a(2)).powi(2) + 0.9 * p.w(1, 4).sin() * p.a(3) * p.w(1, 6).cos() - pos,
            )
        }
        DgpKind::Sim2a => expit(1.5 * a + 0.5 * p.y(1) - 1.1 * p.w(0, 1)),
        DgpKind::Sim2b => expit(1.5 * a + 0.5 * p.y(3) - 1.1 * p.w(0, 4)),
    }
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Incremental generator; the adaptive trial drives it one block at a time.
#[derive(Debug, Clone)]
pub struct DgpState {
    kind: DgpKind,
    blocks: Vec<Block>,
    rng: ChaCha8Rng,
}

impl DgpState {
    pub fn new(kind: DgpKind, seed: u64) -> Self {
        DgpState { kind, blocks: Vec::new(), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn kind(&self) -> DgpKind {
        self.kind
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Time index of the next block.
    pub fn next_t(&self) -> usize {
        self.blocks.len() + 1
    }

    pub fn in_burn_in(&self) -> bool {
        self.blocks.len() < self.kind.burn_in()
    }

    /// Draws block `next_t()`. After the burn-in, `prob` overrides the
    /// scenario's treatment mechanism; during it, `prob` is ignored.
    pub fn step(&mut self, prob: Option<f64>) -> &Block {
        let kind = self.kind;
        let block = if self.in_burn_in() {
            let a = bern(&mut self.rng, 0.5);
            let y = f64::from(bern(&mut self.rng, 0.5));
            let w1 = f64::from(bern(&mut self.rng, 0.5));
            let w2 = if kind.has_w3() {
                f64::from(self.rng.random_range(1u8..=3))
            } else {
                StandardNormal.sample(&mut self.rng)
            };
            let mut w = vec![w1, w2];
            if kind.has_w3() {
                w.push(f64::from(bern(&mut self.rng, 0.5)));
            }
            Block { a: vec![a], l: vec![], y, w, g_prob: Some(vec![0.5]) }
        } else {
            let past = &self.blocks;
            let g = prob.unwrap_or_else(|| treatment_prob(kind, past));
            let a = bern(&mut self.rng, g);
            let y = f64::from(bern(&mut self.rng, outcome_prob(kind, past, a)));
            let p = Past(past);
            let w = match kind {
                DgpKind::Sim1a => {
                    let w1 = f64::from(bern(&mut self.rng, 0.5));
                    let w2 = f64::from(self.rng.random_range(1u8..=3));
                    let w3 = f64::from(bern(&mut self.rng, 0.5));
                    vec![w1, w2, w3]
                }
                DgpKind::Sim1b | DgpKind::Sim1c | DgpKind::Sim2a => {
                    let w1 = f64::from(bern(&mut self.rng, expit(0.5 * p.w(0, 1) - 0.5 * p.y(1) + 0.1 * p.w(1, 1))));
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    vec![w1, 0.6 * p.a(1) + p.y(1) - p.w(0, 1) + z]
                }
                DgpKind::Sim2b => {
                    let w1 = f64::from(bern(&mut self.rng, expit(0.5 * p.w(0, 1) - 0.5 * p.y(1) + 0.1 * p.w(1, 2))));
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    vec![w1, 0.6 * p.a(1) + p.y(1) - p.w(0, 2) + z]
                }
            };
            Block { a: vec![a], l: vec![], y, w, g_prob: Some(vec![g]) }
        };
        self.blocks.push(block);
        self.blocks.last().expect("just pushed")
    }

    pub fn into_series(self) -> Result<TimeSeries> {
        TimeSeries::new(self.kind.schema(), self.blocks)
    }
}

/// Draws a series of `n` blocks. `rule_hook(t, past)` returns the
/// assignment probability for each block after the burn-in.
pub fn draw_dgp(
    kind: DgpKind,
    n: usize,
    seed: u64,
    mut rule_hook: Option<&mut dyn FnMut(usize, &[Block]) -> f64>,
) -> Result<TimeSeries> {
    if n <= kind.burn_in() {
        return Err(Error::InvalidArgument(format!(
            "{}: length {n} does not exceed the burn-in {}",
            kind.name(),
            kind.burn_in()
        )));
    }
    let mut state = DgpState::new(kind, seed);
    while state.blocks.len() < n {
        let prob = match rule_hook.as_mut() {
            Some(hook) if !state.in_burn_in() => Some(hook(state.next_t(), &state.blocks)),
            _ => None,
        };
        state.step(prob);
    }
    state.into_series()
}
