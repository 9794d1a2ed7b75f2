use crate::error::{Error, Result};

fn check(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    Ok(())
}

/// KL(P‖Q) in nats. Terms with `pᵢ = 0` contribute nothing.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    check(p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Mean of the forward and reverse KL divergences.
pub fn average_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(0.5 * (kl(p, q)? + kl(q, p)?))
}

/// Hellinger distance `sqrt(1 − Σ√(pᵢqᵢ))`, evaluated as
/// `sqrt(½ Σ(√pᵢ − √qᵢ)²)` so identical inputs give exactly zero.
pub fn hellinger(p: &[f64], q: &[f64]) -> Result<f64> {
    check(p, q)?;
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * s).sqrt().min(1.0))
}
