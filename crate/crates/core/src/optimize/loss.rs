use crate::autodiff::{AdError, Tape, VarId};

/// How per-state mismatches are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Sum,
    /// Sum divided by the number of states.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum NormKind {
    #[default]
    Euclidean,
    /// `‖v‖ = ‖√w ∘ v‖₂`, e.g. with lumped mass weights for a discrete L²
    /// norm.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Regularization {
    #[default]
    None,
    /// `‖q‖` in the tracking norm.
    Norm,
    /// `‖(q - q_ref) / q_ref‖₂`.
    RelativeTo(Vec<f64>),
}

/// `J = avg_j ‖truth_j - guess_j‖ + α·R(q)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossSpec {
    pub averaging: Averaging,
    pub norm: NormKind,
    pub alpha: f64,
    pub regularization: Regularization,
}

impl LossSpec {
    pub fn euclidean() -> Self {
        Self::default()
    }

    pub fn with_alpha(mut self, alpha: f64, regularization: Regularization) -> Self {
        self.alpha = alpha;
        self.regularization = regularization;
        self
    }

    pub fn averaged(mut self) -> Self {
        self.averaging = Averaging::Mean;
        self
    }

    pub fn weighted(mut self, weights: Vec<f64>) -> Self {
        self.norm = NormKind::Weighted(weights);
        self
    }
}

/// Norm of `v` on the tape.
pub fn weighted_norm(tape: &mut Tape, v: VarId, norm: &NormKind) -> Result<VarId, AdError> {
    match norm {
        NormKind::Euclidean => tape.norm2(v),
        NormKind::Weighted(w) => {
            let s = tape.constant(w.iter().map(|x| x.sqrt()).collect());
            let sv = tape.mul(s, v)?;
            tape.norm2(sv)
        }
    }
}

/// Builds the loss of `spec` on the tape. `reg_target` is the regularized
/// quantity and is required whenever `spec.alpha > 0`.
pub fn tracking_loss(
    tape: &mut Tape,
    guess: &[VarId],
    truth: &[VarId],
    spec: &LossSpec,
    reg_target: Option<VarId>,
) -> Result<VarId, AdError> {
    if guess.len() != truth.len() || guess.is_empty() {
        return Err(AdError::ShapeMismatch {
            op: "tracking_loss states",
            left: guess.len(),
            right: truth.len(),
        });
    }
    let mut terms = Vec::with_capacity(guess.len());
    for (&g, &t) in guess.iter().zip(truth) {
        let d = tape.sub(t, g)?;
        terms.push(weighted_norm(tape, d, &spec.norm)?);
    }
    let stacked = tape.concat(&terms)?;
    let mut loss = match spec.averaging {
        Averaging::Sum => tape.sum(stacked)?,
        Averaging::Mean => tape.mean(stacked)?,
    };
    if spec.alpha != 0.0 && spec.regularization != Regularization::None {
        let q = reg_target.ok_or(AdError::ShapeMismatch {
            op: "tracking_loss regularization target",
            left: 0,
            right: 1,
        })?;
        let r = match &spec.regularization {
            Regularization::None => unreachable!(),
            Regularization::Norm => weighted_norm(tape, q, &spec.norm)?,
            Regularization::RelativeTo(reference) => {
                let r = tape.constant(reference.clone());
                let d = tape.sub(q, r)?;
                let inv = tape.constant(reference.iter().map(|x| 1.0 / x).collect());
                let rel = tape.mul(d, inv)?;
                tape.norm2(rel)?
            }
        };
        let scaled = tape.scale(r, spec.alpha)?;
        loss = tape.add(loss, scaled)?;
    }
    Ok(loss)
}
