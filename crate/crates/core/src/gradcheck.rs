//! Seeded finite-difference checks of every analytic gradient in the crate.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Label, LabelMatrix};
use crate::error::Result;
use crate::losses::{self, LabelSets, LatentBatch, LatentPenalty, Whitening};
use crate::model::{C2AEModel, LossMode, ModelSpec};
use crate::nn::{finite_diff_grad, init_network, max_rel_error, ActivationSpec, Matrix, Network};

pub const STEP: f64 = 1e-5;
pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Cases with a hidden pre-activation closer than this to the leaky-ReLU kink
/// are redrawn; a finite-difference step across the kink is meaningless.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} cases={:<4} max_rel_err={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_rel_error,
            self.tolerance
        )
    }
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Random ternary labels; `missing_rate` of entries hidden.
pub fn random_labels(rng: &mut impl Rng, m: usize, n: usize, missing_rate: f64) -> LabelMatrix {
    let data = (0..m * n)
        .map(|_| {
            if rng.random::<f64>() < missing_rate {
                Label::Missing
            } else if rng.random::<bool>() {
                Label::Pos
            } else {
                Label::Neg
            }
        })
        .collect();
    LabelMatrix::new(m, n, data).expect("sized")
}

fn check(
    name: &'static str,
    tolerance: f64,
    cases: usize,
    mut case: impl FnMut(usize) -> Result<f64>,
) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for k in 0..cases {
        worst = worst.max(case(k)?);
    }
    Ok(CheckResult {
        name,
        cases,
        max_rel_error: worst,
        tolerance,
    })
}

fn near_kink(net: &Network, x: &Matrix) -> Result<bool> {
    let (_, cache) = net.forward(x)?;
    let pre = cache.pre_activations();
    Ok(pre[..pre.len() - 1]
        .iter()
        .any(|z| z.as_slice().iter().any(|v| v.abs() < KINK_MARGIN)))
}

fn network_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    loop {
        if let Some(err) = try_network_case(rng)? {
            return Ok(err);
        }
    }
}

fn try_network_case(rng: &mut ChaCha8Rng) -> Result<Option<f64>> {
    let depth = rng.random_range(1..=3);
    let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=16)).collect();
    let n = rng.random_range(1..=8);
    let slope = rng.random_range(0.01..0.5);
    let mut net = init_network(&dims, ActivationSpec::leaky_hidden(slope)?, rng.random())?;
    let x = random_matrix(rng, dims[0], n, 1.0);
    if near_kink(&net, &x)? {
        return Ok(None);
    }
    // L = Σ G ⊙ net(x) for a random G
    let probe = random_matrix(rng, dims[depth], n, 1.0);
    let (_, cache) = net.forward(&x)?;
    let (grads, _) = net.backward(&cache, &probe)?;
    let base = net.flat_params();
    let numeric = finite_diff_grad(
        |p| {
            net.set_flat_params(p).expect("sized");
            let out = net.predict(&x).expect("shape");
            out.as_slice()
                .iter()
                .zip(probe.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        },
        &base,
        STEP,
    )?;
    Ok(Some(max_rel_error(&grads.flatten(), &numeric)))
}

fn latent_case(rng: &mut ChaCha8Rng, whitening: Whitening) -> Result<f64> {
    let l = rng.random_range(1..=8);
    let n = rng.random_range(1..=16);
    let penalty = LatentPenalty {
        lambda: rng.random_range(0.0..2.0),
        whitening,
    };
    let cx = random_matrix(rng, l, n, 0.5);
    let cy = random_matrix(rng, l, n, 0.5);
    let (dx, dy) = penalty.grads(&LatentBatch::new(&cx, &cy)?)?;
    let joint: Vec<f64> = cx.as_slice().iter().chain(cy.as_slice()).copied().collect();
    let numeric = finite_diff_grad(
        |v| {
            let a = Matrix::from_vec(l, n, v[..l * n].to_vec()).expect("sized");
            let b = Matrix::from_vec(l, n, v[l * n..].to_vec()).expect("sized");
            penalty
                .loss(&LatentBatch::new(&a, &b).expect("shape"))
                .expect("valid")
        },
        &joint,
        STEP,
    )?;
    let analytic: Vec<f64> = dx.as_slice().iter().chain(dy.as_slice()).copied().collect();
    Ok(max_rel_error(&analytic, &numeric))
}

fn scores_case(
    rng: &mut ChaCha8Rng,
    loss: impl Fn(&Matrix, &LabelSets) -> Result<(f64, Matrix)>,
) -> Result<f64> {
    let m = rng.random_range(2..=12);
    let n = rng.random_range(1..=16);
    let labels = random_labels(rng, m, n, 0.25);
    let sets = LabelSets::from_labels(&labels);
    let scores = random_matrix(rng, m, n, 2.0);
    let (_, grad) = loss(&scores, &sets)?;
    let numeric = finite_diff_grad(
        |v| {
            let s = Matrix::from_vec(m, n, v.to_vec()).expect("sized");
            loss(&s, &sets).expect("valid").0
        },
        scores.as_slice(),
        STEP,
    )?;
    Ok(max_rel_error(grad.as_slice(), &numeric))
}

fn ranking(scores: &Matrix, sets: &LabelSets) -> Result<(f64, Matrix)> {
    Ok((
        losses::output_loss(scores, sets)?,
        losses::output_grad(scores, sets)?,
    ))
}

/// Builds a tiny random model and batch and compares the full parameter
/// gradient of the objective with central differences.
pub fn model_case(rng: &mut impl Rng, mode: LossMode) -> Result<f64> {
    let d = rng.random_range(1..=6);
    let m = rng.random_range(2..=6);
    let l = rng.random_range(1..=3);
    let n = rng.random_range(1..=4);
    let spec = ModelSpec {
        mode,
        n_features: d,
        n_labels: m,
        latent_dim: l,
        hidden_dims: vec![rng.random_range(1..=6)],
        slope: 0.1,
        alpha: rng.random_range(0.1..10.0),
        lambda: 0.5,
        whitening: Whitening::Sum,
    };
    let mut model = C2AEModel::init(&spec, rng.random())?;
    // move biases off zero so every parameter is exercised
    let mut p = model.flat_params();
    for v in &mut p {
        *v += rng.random_range(-0.2..0.2);
    }
    model.set_flat_params(&p)?;

    let mut x = random_matrix(rng, d, n, 1.0);
    while near_kink(model.fx(), &x)? {
        x = random_matrix(rng, d, n, 1.0);
    }
    let labels = random_labels(rng, m, n, 0.2);
    let sets = LabelSets::from_labels(&labels);
    let enc = crate::model::encoder_input(&labels, rng.random());
    let (_, grads) = model.objective_and_grads(&x, &enc, &sets)?;
    let numeric = finite_diff_grad(
        |v| {
            model.set_flat_params(v).expect("sized");
            model.objective(&x, &enc, &sets).expect("valid").total
        },
        &p,
        STEP,
    )?;
    Ok(max_rel_error(&grads.flatten(), &numeric))
}

/// Runs every check with cases drawn from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    Ok(vec![
        check("network backward", LOSS_TOLERANCE, 100, |_| {
            network_case(rng)
        })?,
        check("latent grads (sum)", LOSS_TOLERANCE, 200, |_| {
            latent_case(rng, Whitening::Sum)
        })?,
        check("latent grads (mean)", LOSS_TOLERANCE, 50, |_| {
            latent_case(rng, Whitening::Mean)
        })?,
        check("ranking grad (masked)", LOSS_TOLERANCE, 200, |_| {
            scores_case(rng, ranking)
        })?,
        check("bce grad (masked)", LOSS_TOLERANCE, 100, |_| {
            scores_case(rng, losses::bce_loss)
        })?,
        check("objective c2ae", MODEL_TOLERANCE, 20, |_| {
            model_case(rng, LossMode::C2ae)
        })?,
        check("objective bpmll", MODEL_TOLERANCE, 20, |_| {
            model_case(rng, LossMode::Bpmll)
        })?,
        check("objective bce", MODEL_TOLERANCE, 20, |_| {
            model_case(rng, LossMode::Bce)
        })?,
    ])
}
