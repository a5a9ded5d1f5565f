//! Finite-difference checks of every differentiable piece, from single layers
//! up to the indicator and policy graphs. Shared by the CLI and the tests.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::indicator::{build_labels, IndicatorModel};
use crate::nnkit::{
    central_difference, concat_rows, max_relative_error, mse, split_rows, weighted_bce_with_logits, Activation, Affine,
    GradCheckReport, GroupTag, Lstm, Mlp, ParamGroup,
};
use crate::policy::{Architecture, PolicyConfig, VPPolicy};
use crate::rng::{derive_seed, SeededRng};
use crate::traj::Schema;

/// Worst result of one component over all draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub draws: usize,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passes(&self, tol: f64) -> bool {
        self.report.max_error < tol
    }
}

pub const COMPONENTS: [&str; 11] = [
    "affine", "relu", "tanh", "sigmoid", "concat", "lstm", "mse", "weighted_bce", "indicator", "policy_concat", "policy_vision",
];

fn normals(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn worse(a: GradCheckReport, b: GradCheckReport) -> GradCheckReport {
    let checked = a.checked + b.checked;
    let mut w = if b.max_error > a.max_error || b.max_error.is_nan() { b } else { a };
    w.checked = checked;
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares analytic group gradients against differences of `loss` taken
/// over the group's flattened parameters.
fn check_params<F: FnMut(&ParamGroup) -> f64>(group: &ParamGroup, analytic: &[f64], mut loss: F, h: f64) -> GradCheckReport {
    let mut probe = group.clone();
    let numeric = central_difference(
        |x| {
            probe.set_flat_params(x).expect("same length");
            loss(&probe)
        },
        &group.flat_params(),
        h,
    );
    max_relative_error(analytic, &numeric)
}

fn mlp_draw(act: Activation, rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let (batch, sizes) = (3, [4, 5, 3]);
    let mut g = ParamGroup::new("mlp", GroupTag::Head);
    let net = Mlp::create(&mut g, "m", &sizes, act, act, rng);
    let x = normals(rng, batch * sizes[0]);
    let c = normals(rng, batch * sizes[2]);
    let cache = net.forward(&g, &x, batch)?;
    let dx = net.backward(&mut g, &cache, &c, true).unwrap_or_default();
    let by_params = check_params(&g, &g.flat_grads(), |p| dot(&net.forward(p, &x, batch).unwrap().output, &c), h);
    let numeric = central_difference(|v| dot(&net.forward(&g, v, batch).unwrap().output, &c), &x, h);
    Ok(worse(by_params, max_relative_error(&dx, &numeric)))
}

fn affine_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let (batch, ni, no) = (4, 5, 3);
    let mut g = ParamGroup::new("affine", GroupTag::Head);
    let layer = Affine::create(&mut g, "a", ni, no, rng);
    let x = normals(rng, batch * ni);
    let c = normals(rng, batch * no);
    let dx = layer.backward(&mut g, &x, &c, batch, true).unwrap_or_default();
    let by_params = check_params(&g, &g.flat_grads(), |p| dot(&layer.forward(p, &x, batch).unwrap(), &c), h);
    let numeric = central_difference(|v| dot(&layer.forward(&g, v, batch).unwrap(), &c), &x, h);
    Ok(worse(by_params, max_relative_error(&dx, &numeric)))
}

/// Two inputs concatenated, then an affine map; checks the gradient routed to each side.
fn concat_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let (batch, wa, wb, no) = (3, 2, 4, 3);
    let mut g = ParamGroup::new("concat", GroupTag::Head);
    let layer = Affine::create(&mut g, "a", wa + wb, no, rng);
    let a = normals(rng, batch * wa);
    let b = normals(rng, batch * wb);
    let c = normals(rng, batch * no);
    let f = |a: &[f64], b: &[f64]| dot(&layer.forward(&g, &concat_rows(a, wa, b, wb, batch), batch).unwrap(), &c);
    let joint = concat_rows(&a, wa, &b, wb, batch);
    let mut gg = g.clone();
    let dx = layer.backward(&mut gg, &joint, &c, batch, true).unwrap_or_default();
    let (da, db) = split_rows(&dx, wa, wb, batch);
    let na = central_difference(|v| f(v, &b), &a, h);
    let nb = central_difference(|v| f(&a, v), &b, h);
    Ok(worse(max_relative_error(&da, &na), max_relative_error(&db, &nb)))
}

fn lstm_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let (steps, d, hid) = (5, 3, 4);
    let mut g = ParamGroup::new("lstm", GroupTag::Indicator);
    let cell = Lstm::create(&mut g, "cell", d, hid, rng);
    let xs = normals(rng, steps * d);
    let c = normals(rng, steps * hid);
    let trace = cell.forward(&g, &xs)?;
    let dx = cell.backward(&mut g, &trace, &c);
    let f = |p: &ParamGroup, x: &[f64]| dot(cell.forward(p, x).unwrap().outputs(hid), &c);
    let by_params = check_params(&g, &g.flat_grads(), |p| f(p, &xs), h);
    let numeric = central_difference(|v| f(&g, v), &xs, h);
    Ok(worse(by_params, max_relative_error(&dx, &numeric)))
}

fn mse_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let pred = normals(rng, 7);
    let target = normals(rng, 7);
    let (_, grad) = mse(&pred, &target)?;
    let numeric = central_difference(|v| mse(v, &target).unwrap().0, &pred, h);
    Ok(max_relative_error(&grad, &numeric))
}

fn bce_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let n = 7;
    let z: Vec<f64> = normals(rng, n).iter().map(|v| 3.0 * v).collect();
    let y: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.range(0.1, 2.0)).collect();
    let (_, grad) = weighted_bce_with_logits(&z, &y, &w)?;
    let numeric = central_difference(|v| weighted_bce_with_logits(v, &y, &w).unwrap().0, &z, h);
    Ok(max_relative_error(&grad, &numeric))
}

fn indicator_draw(rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let (n, d) = (9, 3);
    let mut model = IndicatorModel::new(d, 5, rng.next_u64());
    let x = normals(rng, (n - 1) * d);
    let change = 2 + rng.below(n - 4);
    let labels = build_labels(&[change], n, 1, 0.2)?;
    model.group.zero_grads();
    model.accumulate(&x, &labels, 1.0)?;
    let analytic = model.group.flat_grads();
    let mut probe = model.clone();
    Ok(check_params(
        &model.group,
        &analytic,
        |p| {
            probe.group = p.clone();
            probe.accumulate(&x, &labels, 1.0).unwrap()
        },
        h,
    ))
}

fn policy_draw(arch: Architecture, rng: &mut SeededRng, h: f64) -> Result<GradCheckReport> {
    let schema = Schema { d_p: 2, d_theta: 0, action_dim: 3, obs_dim: 6 };
    let cfg = PolicyConfig {
        arch,
        history: 2,
        horizon: 2,
        vision_hidden: 6,
        vision_features: 4,
        proprio_hidden: 5,
        proprio_features: 3,
        head_hidden: 5,
        normalize: false,
    };
    let batch = 3;
    let mut policy = VPPolicy::new(cfg, schema, rng.next_u64())?;
    let obs = normals(rng, batch * policy.vision_input_dim());
    let proprio = normals(rng, batch * policy.proprio_input_dim().max(1));
    let proprio = &proprio[..batch * policy.proprio_input_dim()];
    let target = normals(rng, batch * policy.output_dim());
    policy.loss_and_grad(&obs, proprio, &target, batch)?;
    let mut report: Option<GradCheckReport> = None;
    let tags: Vec<GroupTag> = policy.groups().iter().map(|g| g.tag).collect();
    for tag in tags {
        let group = policy.groups().into_iter().find(|g| g.tag == tag).expect("tag present").clone();
        let mut probe = policy.clone();
        let r = check_params(
            &group,
            &group.flat_grads(),
            |p| {
                match tag {
                    GroupTag::Vision => probe.vision = p.clone(),
                    GroupTag::Proprio => probe.proprio = Some(p.clone()),
                    _ => probe.head = p.clone(),
                }
                mse(&probe.forward(&obs, proprio, batch).unwrap(), &target).unwrap().0
            },
            h,
        );
        report = Some(match report {
            Some(prev) => worse(prev, r),
            None => r,
        });
    }
    Ok(report.unwrap_or(GradCheckReport { max_error: 0.0, worst_index: 0, checked: 0 }))
}

/// Runs `draws` random instances of `component` and keeps the worst error.
pub fn check_component(component: &str, draws: usize, seed: u64, h: f64) -> Result<SuiteEntry> {
    let mut worst: Option<GradCheckReport> = None;
    for k in 0..draws {
        let mut rng = SeededRng::new(derive_seed(seed, k as u64));
        let r = match component {
            "affine" => affine_draw(&mut rng, h)?,
            "relu" => mlp_draw(Activation::Relu, &mut rng, h)?,
            "tanh" => mlp_draw(Activation::Tanh, &mut rng, h)?,
            "sigmoid" => mlp_draw(Activation::Sigmoid, &mut rng, h)?,
            "concat" => concat_draw(&mut rng, h)?,
            "lstm" => lstm_draw(&mut rng, h)?,
            "mse" => mse_draw(&mut rng, h)?,
            "weighted_bce" => bce_draw(&mut rng, h)?,
            "indicator" => indicator_draw(&mut rng, h)?,
            "policy_concat" => policy_draw(Architecture::Concat, &mut rng, h)?,
            "policy_vision" => policy_draw(Architecture::VisionOnly, &mut rng, h)?,
            other => return Err(crate::error::arg_err!("unknown gradient-check component `{other}`")),
        };
        worst = Some(match worst {
            Some(prev) => worse(prev, r),
            None => r,
        });
    }
    let report = worst.unwrap_or(GradCheckReport { max_error: 0.0, worst_index: 0, checked: 0 });
    Ok(SuiteEntry { name: String::from(component), draws, report })
}

/// Every component in [`COMPONENTS`].
pub fn run_suite(draws: usize, seed: u64, h: f64) -> Result<Vec<SuiteEntry>> {
    COMPONENTS.iter().map(|c| check_component(c, draws, seed, h)).collect()
}
