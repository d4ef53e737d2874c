//! Reverse-mode gradients against central finite differences.
//!
//! Builds a tiny cosine/hinge computation by hand, differentiates it on the
//! tape, then runs the randomized model-level check used by `selftest`.

use std::sync::Arc;

use lifelong::numgrad::{Layout, ParamVector, Tape};
use lifelong::oracle::{central_difference, gradient_check, relative_error};

fn main() -> lifelong::Result<()> {
    let mut layout = Layout::new();
    let w = layout.push("w", 2, 3);
    let b = layout.push("b", 2, 1);
    let params = ParamVector::from_values(Arc::new(layout), vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6, 0.05, -0.1])?;

    // loss = hinge(cos(tanh(Wx + b), r_pos), cos(tanh(Wx + b), r_neg), 1.5)
    let loss_of = |p: &ParamVector| -> lifelong::Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new(p);
        let x = tape.input(vec![1.0, -2.0, 0.5]);
        let h = tape.affine(x, w, Some(b))?;
        let h = tape.tanh(h);
        let pos = tape.input(vec![1.0, 0.2]);
        let neg = tape.input(vec![-0.3, 1.0]);
        let sp = tape.cosine(h, pos)?;
        let sn = tape.cosine(h, neg)?;
        let loss = tape.hinge(sp, sn, 1.5);
        Ok((tape.scalar(loss), tape.backward(loss, 1.0)?.into_values()))
    };

    let (value, analytic) = loss_of(&params)?;
    let mut probe = params.clone();
    let numeric = central_difference(
        |v| {
            probe.values_mut().copy_from_slice(v);
            loss_of(&probe).map(|(l, _)| l).unwrap_or(f64::NAN)
        },
        params.values(),
        1e-6,
    );
    println!("loss {value:.6}");
    println!("tape    {analytic:.6?}");
    println!("numeric {numeric:.6?}");
    println!("relative error {:.2e}", relative_error(&analytic, &numeric));

    let worst = (0..20)
        .map(|seed| gradient_check(seed, 1e-6))
        .collect::<lifelong::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("20 random encoder/alignment models: worst relative error {worst:.2e}");
    Ok(())
}
