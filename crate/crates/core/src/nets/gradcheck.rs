//! Central finite-difference verification of the analytic backward pass.

use rand::Rng;

use crate::error::Result;
use crate::rng::{mix64, rng_from};
use crate::tensor::Tensor;

use super::layers::Pins;
use super::network::Network;
use super::params::ParamStore;
use super::spec::{Family, NetworkSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst element.
    pub worst: String,
    pub checked: usize,
}

/// Spatial side of the probe input used for each family.
pub fn probe_side(family: Family) -> usize {
    match family {
        Family::Srn => 8,
        _ => 16,
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn mean_output(net: &Network, params: &ParamStore<f64>, x: &Tensor<f64>, masks: &[Vec<bool>]) -> Result<f64> {
    let mut pins = Pins::Replay(masks, 0);
    Ok(net.run_pinned(params, x, &mut pins)?.0.mean())
}

/// Compare analytic gradients of `mean(net(x))` against the sixth-order
/// central difference with step `eps` (offsets ±eps, ±2eps, ±3eps).
///
/// Rectifier branches are held at the ones taken by the unperturbed pass,
/// so a perturbation that pushes a pre-activation across zero does not
/// register as a gradient error. `tamper` may rewrite the analytic
/// gradients before comparison (used to prove the detector fires).
pub fn grad_check_with(
    net: &Network,
    params: &mut ParamStore<f64>,
    x: &Tensor<f64>,
    eps: f64,
    tamper: Option<&dyn Fn(&mut ParamStore<f64>)>,
) -> Result<GradCheckReport> {
    params.zero_grads();
    let mut pins = Pins::Record(Vec::new());
    let (y, tape) = net.run_pinned(params, x, &mut pins)?;
    let Pins::Record(masks) = pins else { unreachable!() };
    let dy = Tensor::full(y.shape(), 1.0 / y.len() as f64);
    net.backward(params, tape, &dy, false)?;
    if let Some(f) = tamper {
        f(params);
    }
    let analytic: Vec<Vec<f64>> = params.grads().iter().map(|g| g.data().to_vec()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for i in 0..params.len() {
        for j in 0..params.value(i).len() {
            let orig = params.value(i).data()[j];
            let mut at = |offset: f64| -> Result<f64> {
                params.value_mut(i)[j] = orig + offset;
                mean_output(net, params, x, &masks)
            };
            let d1 = at(eps)? - at(-eps)?;
            let d2 = at(2.0 * eps)? - at(-2.0 * eps)?;
            let d3 = at(3.0 * eps)? - at(-3.0 * eps)?;
            params.value_mut(i)[j] = orig;
            let numeric = (45.0 * d1 - 9.0 * d2 + d3) / (60.0 * eps);
            let err = relative_error(analytic[i][j], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{}[{j}]", params.names()[i]);
            }
        }
    }
    Ok(report)
}

/// Deterministic probe batch in `[-1,1]`.
pub fn probe_input(side: usize, seed: u64) -> Tensor<f64> {
    let mut rng = rng_from(mix64(seed ^ 0x5EED_1A9E));
    let data = (0..3 * side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[1, 3, side, side], data).expect("probe shape")
}

/// Build `spec` in 64-bit and return the worst relative error between the
/// analytic and finite-difference gradients over all parameters.
pub fn grad_check(spec: NetworkSpec, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let (net, mut params) = Network::build::<f64>(spec, seed)?;
    let x = probe_input(probe_side(spec.family), seed);
    grad_check_with(&net, &mut params, &x, eps, None)
}
