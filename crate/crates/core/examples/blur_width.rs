//! Estimating an unknown blur width together with the image, first by damped
//! Gauss-Newton on the joint unknowns and then by variable projection.

use hybrid_krylov::hybrid::{run_hybrid, HybridOptions, Method, StopFlags};
use hybrid_krylov::nonlinear::{
    gauss_newton_hybrid, varpro_hybrid, BlurWidthModel, GaussNewtonOptions, JointModel,
    SeparableModel, VarproOptions,
};
use hybrid_krylov::paramselect::{Rule, RuleConfig};
use hybrid_krylov::testproblems::add_noise;

fn main() -> hybrid_krylov::Result<()> {
    let sigma = 1.5;
    let model = BlurWidthModel::new(16, 5)?;
    let object = BlurWidthModel::test_object(16)?;
    let b = add_noise(&model.operator(&[sigma])?.apply(&object)?, 1e-3, 3).b;

    let mut inner = HybridOptions::new(Method::HybridLsqr, RuleConfig::new(Rule::Gcv));
    inner.max_iter = 40;
    inner.min_iter = 1;
    inner.stop_on = StopFlags::NONE;

    let start = 1.0;
    let mut x0 = vec![start];
    x0.extend(run_hybrid(model.operator(&[start])?.as_ref(), &b, &inner, None)?.x);
    let mut gn = GaussNewtonOptions::new(inner.clone());
    gn.max_outer = 25;
    let trace = gauss_newton_hybrid(&JointModel { model: &model }, &b, &x0, &gn)?;
    for r in &trace.records {
        println!(
            "gn {:>2}: lambda={:.3e} misfit={:.4e} step={:.3} inner k={}",
            r.iter, r.lambda, r.misfit, r.step, r.inner_k
        );
    }
    println!(
        "gauss-newton: sigma {:.4} ({})",
        trace.x[0],
        trace.termination.name()
    );

    let vp = varpro_hybrid(&model, &b, &[start], &VarproOptions::new(inner))?;
    for r in &vp.records {
        println!(
            "varpro {:>2}: sigma={:.4} objective={:.4e}",
            r.iter, r.xnl[0], r.objective
        );
    }
    println!(
        "varpro: sigma {:.4} ({}), truth {sigma}",
        vp.xnl[0],
        vp.termination.name()
    );
    Ok(())
}
