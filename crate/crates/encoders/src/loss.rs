use latscape_autodiff::{Tape, Var};

use crate::error::{EncoderError, Result};

/// Scalar loss nodes on the tape.
#[derive(Clone, Copy, Debug)]
pub struct VaeLoss {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
}

/// Squared error summed per sample, averaged over the batch.
pub fn recon_loss(tape: &mut Tape, recon: Var, input: Var) -> Result<Var> {
    let batch = tape.shape(input)[0];
    let d = tape.sub(recon, input)?;
    let sq = tape.mul(d, d)?;
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / batch as f64))
}

/// `mean_batch[ Σ (recon − input)² + β · KL ]` with
/// `KL = −½ Σ (1 + logσ² − μ² − σ²)` per sample.
pub fn vae_loss(
    tape: &mut Tape,
    recon: Var,
    input: Var,
    mu: Var,
    logvar: Var,
    beta: f64,
) -> Result<VaeLoss> {
    if tape.shape(recon) != tape.shape(input) {
        return Err(EncoderError::InvalidConfig(format!(
            "reconstruction shape {:?} differs from input {:?}",
            tape.shape(recon),
            tape.shape(input)
        )));
    }
    for v in [recon, input, mu, logvar] {
        if !tape.value(v).is_finite() {
            return Err(EncoderError::NonFiniteInput("vae_loss"));
        }
    }
    let batch = tape.shape(input)[0] as f64;
    let n_latent = tape.value(mu).numel() as f64;
    let recon_l = recon_loss(tape, recon, input)?;
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar);
    let t = tape.sub(logvar, mu2)?;
    let t = tape.sub(t, var)?;
    let s = tape.sum(t);
    let kl = tape.affine(s, -0.5 / batch, -0.5 * n_latent / batch);
    let weighted = tape.scale(kl, beta);
    let total = tape.add(recon_l, weighted)?;
    Ok(VaeLoss {
        total,
        recon: recon_l,
        kl,
    })
}

/// `z = μ + exp(½ logσ²) · ε`
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, noise: Var) -> Result<Var> {
    if tape.shape(mu) != tape.shape(logvar) || tape.shape(mu) != tape.shape(noise) {
        return Err(EncoderError::InvalidConfig(format!(
            "reparameterize shapes differ: {:?}, {:?}, {:?}",
            tape.shape(mu),
            tape.shape(logvar),
            tape.shape(noise)
        )));
    }
    let half = tape.scale(logvar, 0.5);
    let sigma = tape.exp(half);
    let scaled = tape.mul(sigma, noise)?;
    Ok(tape.add(mu, scaled)?)
}
