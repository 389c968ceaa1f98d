use super::{AdError, Tape, VarId};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub tape_gradient: Vec<f64>,
    pub fd_gradient: Vec<f64>,
}

/// Compares the tape gradient of `f` at `x0` against central differences.
///
/// `f` receives a fresh tape and the parameter leaf and must return a scalar.
/// The error metric per coordinate is `|g - ĝ| / max(1, |g|, |ĝ|)`.
pub fn gradient_check<F>(f: F, x0: &[f64], eps: f64) -> Result<GradCheck, AdError>
where
    F: Fn(&mut Tape, VarId) -> Result<VarId, AdError>,
{
    let eval = |x: &[f64]| -> Result<f64, AdError> {
        let mut tape = Tape::new();
        let p = tape.param(x.to_vec());
        let j = f(&mut tape, p)?;
        Ok(tape.scalar(j))
    };

    let mut tape = Tape::new();
    let p = tape.param(x0.to_vec());
    let j = f(&mut tape, p)?;
    let tape_gradient = tape.backward(j)?.wrt(p);

    let mut fd_gradient = Vec::with_capacity(x0.len());
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let up = eval(&x)?;
        x[i] = x0[i] - eps;
        let down = eval(&x)?;
        x[i] = x0[i];
        fd_gradient.push((up - down) / (2.0 * eps));
    }

    let (worst_index, max_rel_error) = tape_gradient
        .iter()
        .zip(&fd_gradient)
        .map(|(&g, &h)| (g - h).abs() / 1f64.max(g.abs()).max(h.abs()))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(GradCheck {
        max_rel_error,
        worst_index,
        tape_gradient,
        fd_gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        let report = gradient_check(
            |t, x| {
                let w = t.constant(vec![1.0, 2.0, 3.0]);
                let sq = t.square(x)?;
                t.dot(w, sq)
            },
            &[0.5, -1.0, 2.0],
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }

    #[test]
    fn sigmoid_affine_chain() {
        let report = gradient_check(
            |t, w| {
                let x = t.constant(vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]);
                let b = t.constant(vec![0.05, -0.05]);
                let h = t.affine_batch(x, w, b, 2, 2)?;
                let s = t.sigmoid(h)?;
                let m = t.mean(s)?;
                t.square(m)
            },
            &[0.3, -0.2, 0.7, 1.1],
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-9, "{report:?}");
    }
}
