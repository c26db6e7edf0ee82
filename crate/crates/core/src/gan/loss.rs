use super::tape::{Tape, Var};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn mean_log(p: &[f64], flip: bool) -> f64 {
    p.iter()
        .map(|&v| {
            let v = if flip { 1.0 - v } else { v };
            v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
        })
        .sum::<f64>()
        / p.len() as f64
}

/// Discriminator objective `E[log D(x)] + E[log(1 − D(G(z)))]`, which the
/// discriminator maximises.
pub fn loss_d(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("discriminator batch".into()));
    }
    Ok(mean_log(d_real, false) + mean_log(d_fake, true))
}

/// Generator objective `E[log D(G(z))]`, which the generator maximises.
pub fn loss_g(d_fake: &[f64]) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(Error::Empty("generator batch".into()));
    }
    Ok(mean_log(d_fake, false))
}

/// [`loss_d`] recorded on a tape.
pub fn loss_d_tape(tape: &mut Tape, d_real: Var, d_fake: Var) -> Var {
    let lr = tape.clamped_log(d_real, PROB_CLAMP);
    let real = tape.mean(lr);
    let inv = tape.one_minus(d_fake);
    let lf = tape.clamped_log(inv, PROB_CLAMP);
    let fake = tape.mean(lf);
    tape.add(real, fake)
}

/// [`loss_g`] recorded on a tape.
pub fn loss_g_tape(tape: &mut Tape, d_fake: Var) -> Var {
    let l = tape.clamped_log(d_fake, PROB_CLAMP);
    tape.mean(l)
}

/// Cross-entropy `−Σ target·log(output)` averaged over the `groups`
/// distributions of each of the batch rows.
pub fn cross_entropy_tape(tape: &mut Tape, target: Var, output: Var, groups: usize) -> Var {
    let rows = tape.value(output).nrows();
    let l = tape.clamped_log(output, PROB_CLAMP);
    let tl = tape.mul(target, l);
    let s = tape.sum(tl);
    tape.scale(s, -1.0 / (rows * groups.max(1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn analytic_values() {
        let ln_half = 0.5f64.ln();
        assert!((loss_d(&[0.5], &[0.5]).unwrap() - 2.0 * ln_half).abs() < 1e-15);
        assert!((loss_d(&[0.5], &[0.5]).unwrap() + 1.38629).abs() < 1e-5);
        assert!(loss_d(&[1.0 - 1e-7], &[1e-7]).unwrap().abs() < 1e-6);
        assert!((loss_g(&[0.5]).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(loss_g(&[1.0 - 1e-7]).unwrap().abs() < 1e-6);
        // Exact 0 and 1 are clamped rather than producing infinities.
        assert!(loss_d(&[0.0], &[1.0]).unwrap().is_finite());
        assert!(loss_d(&[], &[0.5]).is_err());
        assert!(loss_g(&[]).is_err());
    }

    #[test]
    fn tape_matches_plain() {
        let mut t = Tape::new();
        let r = t.leaf(array![[0.9], [0.6], [0.2]]);
        let f = t.leaf(array![[0.1], [0.7], [0.4]]);
        let ld = loss_d_tape(&mut t, r, f);
        let lg = loss_g_tape(&mut t, f);
        assert!((t.scalar_value(ld) - loss_d(&[0.9, 0.6, 0.2], &[0.1, 0.7, 0.4]).unwrap()).abs() < 1e-15);
        assert!((t.scalar_value(lg) - loss_g(&[0.1, 0.7, 0.4]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_of_one_hot() {
        let mut t = Tape::new();
        let target = t.leaf(array![[1.0, 0.0, 0.0, 1.0]]);
        let out = t.leaf(array![[0.5, 0.5, 0.25, 0.75]]);
        let ce = cross_entropy_tape(&mut t, target, out, 2);
        let expected = -(0.5f64.ln() + 0.75f64.ln()) / 2.0;
        assert!((t.scalar_value(ce) - expected).abs() < 1e-15);
    }
}
