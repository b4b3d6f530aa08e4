use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{coral_targets, gaussian_soften, hard_label, ScoreBins, SofteningConfig};
use crate::numerics::{Tensor, Var};

/// Training criterion for distribution heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `|E[score] − s|` under the softmax.
    L1,
    /// Cross-entropy against the hard bin of `s`.
    Ce,
    /// Cross-entropy against the Gaussian-softened label of `s`.
    Gaussian,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Criterion::L1),
            "ce" => Ok(Criterion::Ce),
            "gaussian" => Ok(Criterion::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::L1 => "l1",
            Criterion::Ce => "ce",
            Criterion::Gaussian => "gaussian",
        })
    }
}

fn check_logits(logits: Var<'_>, width: usize) -> Result<()> {
    if logits.dims() != (1, width) {
        return Err(Error::shape(
            "loss",
            format!("logits are {:?}, expected (1, {width})", logits.dims()),
        ));
    }
    Ok(())
}

/// `|Σ softmax(z)_k c_k − s|`.
pub fn l1_loss<'t>(logits: Var<'t>, score: f64, bins: &ScoreBins) -> Result<Var<'t>> {
    check_logits(logits, bins.k())?;
    let tape = logits.tape();
    let centers = tape.constant(Tensor::matrix(bins.k(), 1, bins.centers().to_vec())?);
    let expected = logits.softmax(1)?.matmul(centers)?;
    expected.sub(tape.constant(Tensor::full(1, 1, score)))?.abs()?.sum()
}

/// `−log softmax(z)_{hard_label(s)}`.
pub fn hard_ce_loss<'t>(logits: Var<'t>, score: f64, bins: &ScoreBins) -> Result<Var<'t>> {
    check_logits(logits, bins.k())?;
    let k = hard_label(score, bins)?;
    logits.log_softmax()?.slice_cols(k, 1)?.sum()?.scale(-1.0)
}

/// `−Σ_k y_k log softmax(z)_k` with `y` the softened label.
pub fn soft_ce_loss<'t>(
    logits: Var<'t>,
    target: &[f64],
) -> Result<Var<'t>> {
    check_logits(logits, target.len())?;
    let y = logits.tape().constant(Tensor::row(target.to_vec()));
    logits.log_softmax()?.mul(y)?.sum()?.scale(-1.0)
}

/// Mean binary cross-entropy over the `K − 1` cumulative logits.
pub fn coral_loss<'t>(logits: Var<'t>, score: f64, bins: &ScoreBins) -> Result<Var<'t>> {
    check_logits(logits, bins.k() - 1)?;
    let levels = coral_targets(score, bins)?.levels;
    let t = logits
        .tape()
        .constant(Tensor::row(levels.iter().map(|&l| f64::from(l)).collect()));
    // BCE with logits: softplus(z) − t·z.
    logits
        .softplus()?
        .sub(logits.mul(t)?)?
        .sum()?
        .scale(1.0 / (bins.k() - 1) as f64)
}

/// Loss for one head. Cumulative heads always use [`coral_loss`].
pub fn head_loss<'t>(
    logits: Var<'t>,
    score: f64,
    bins: &ScoreBins,
    criterion: Criterion,
    softening: SofteningConfig,
    cumulative: bool,
) -> Result<Var<'t>> {
    if cumulative {
        return coral_loss(logits, score, bins);
    }
    match criterion {
        Criterion::L1 => l1_loss(logits, score, bins),
        Criterion::Ce => hard_ce_loss(logits, score, bins),
        Criterion::Gaussian => {
            let y = gaussian_soften(score, bins, softening)?;
            soft_ce_loss(logits, &y.probs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    fn logits(tape: &Tape, v: Vec<f64>) -> Var<'_> {
        tape.constant(Tensor::row(v))
    }

    #[test]
    fn criterion_names_round_trip() {
        for c in [Criterion::L1, Criterion::Ce, Criterion::Gaussian] {
            assert_eq!(c.to_string().parse::<Criterion>().unwrap(), c);
        }
        assert!("mse".parse::<Criterion>().is_err());
    }

    #[test]
    fn l1_of_uniform_is_distance_to_midpoint() {
        let bins = ScoreBins::mos();
        let tape = Tape::new();
        let loss = l1_loss(logits(&tape, vec![0.0; 20]), 4.0, &bins).unwrap();
        assert!((loss.value().item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hard_ce_of_uniform_is_log_k() {
        let bins = ScoreBins::mos();
        let tape = Tape::new();
        let loss = hard_ce_loss(logits(&tape, vec![0.0; 20]), 2.2, &bins).unwrap();
        assert!((loss.value().item() - 20f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_ce_minimized_at_target() {
        // Gibbs: H(y, p) >= H(y, y) with equality at p = y.
        let bins = ScoreBins::mos();
        let y = gaussian_soften(3.3, &bins, SofteningConfig::default()).unwrap().probs;
        let tape = Tape::new();
        let at_target = soft_ce_loss(logits(&tape, y.iter().map(|p| p.ln()).collect()), &y)
            .unwrap()
            .value()
            .item();
        let entropy: f64 = -y.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        assert!((at_target - entropy).abs() < 1e-9);
        let off = soft_ce_loss(logits(&tape, vec![0.0; 20]), &y).unwrap().value().item();
        assert!(off > at_target);
    }

    #[test]
    fn coral_loss_matches_hand_bce() {
        let bins = ScoreBins::new(4, 1.0, 5.0).unwrap();
        let z = vec![0.5, -1.0, 2.0];
        let tape = Tape::new();
        let loss = coral_loss(logits(&tape, z.clone()), 2.5, &bins).unwrap().value().item();
        // boundaries 2, 3, 4 -> targets 1, 0, 0
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = -((sig(z[0])).ln() + (1.0 - sig(z[1])).ln() + (1.0 - sig(z[2])).ln()) / 3.0;
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn wrong_width_rejected() {
        let bins = ScoreBins::mos();
        let tape = Tape::new();
        assert!(coral_loss(logits(&tape, vec![0.0; 20]), 3.0, &bins).is_err());
        assert!(l1_loss(logits(&tape, vec![0.0; 19]), 3.0, &bins).is_err());
    }
}
