//! Projecting a gradient so it does not increase the loss on stored tasks.

use lifelong::gproject::{agem_project, gem_project, ConstraintSet, GEM_MAX_ITERS, GEM_TOL};
use lifelong::numgrad::{dot, sq_dist};
use lifelong::oracle::gem_oracle;

fn main() -> lifelong::Result<()> {
    let g = vec![1.0, -1.0, 0.5];
    // gradients of two earlier tasks
    let rows = vec![vec![0.0, 1.0, 0.0], vec![-1.0, 0.2, 1.0]];
    let constraints = ConstraintSet::new(3, rows.clone())?;
    println!("violation before: {:.4}", constraints.max_violation(&g));

    let p = gem_project(&g, &constraints, GEM_TOL, GEM_MAX_ITERS)?;
    println!(
        "GEM   g~ = {:.6?}  dual = {:.4?}  iterations = {}  converged = {}",
        p.g_tilde, p.dual, p.iterations, p.converged
    );
    for (j, r) in rows.iter().enumerate() {
        println!("  <g~, g_{j}> = {:+.2e}", dot(&p.g_tilde, r));
    }
    let exact = gem_oracle(&g, &rows)?;
    println!("  distance to active-set solution {:.2e}", sq_dist(&p.g_tilde, &exact).sqrt());

    // A-GEM keeps one averaged constraint and projects in closed form.
    let g_ref: Vec<f64> = (0..3).map(|i| (rows[0][i] + rows[1][i]) / 2.0).collect();
    let a = agem_project(&g, &g_ref)?;
    println!("A-GEM g~ = {a:.6?}  <g~, g_ref> = {:+.2e}", dot(&a, &g_ref));

    let feasible = vec![0.0, 1.0, 1.0];
    let same = gem_project(&feasible, &constraints, GEM_TOL, GEM_MAX_ITERS)?;
    println!("feasible input returned unchanged: {}", same.g_tilde == feasible);
    Ok(())
}
