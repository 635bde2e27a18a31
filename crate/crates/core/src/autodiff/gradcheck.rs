use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AdError, ParamId, ParamStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates dropped because the function is not smooth there.
    pub skipped_kinks: usize,
    pub worst: Option<GradCheckEntry>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.rel_err)
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err() <= self.tol
    }
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64, AdError>
where
    F: Fn(&mut Tape) -> Result<Var, AdError>,
{
    let mut tape = Tape::new(store);
    let out = f(&mut tape)?;
    let shape = tape.shape(out);
    if shape != (1, 1) {
        return Err(AdError::NotScalar(shape));
    }
    Ok(tape.scalar(out))
}

/// Compares backprop against central differences on up to
/// `samples_per_param` random coordinates of every parameter.
///
/// The error measure is `|analytic - numeric| / max(1, |analytic|)`. A
/// coordinate whose differences at `eps` and `eps / 2` disagree by more
/// than `tol` is treated as sitting on a kink and skipped.
pub fn grad_check<F>(
    store: &mut ParamStore,
    f: F,
    eps: f64,
    tol: f64,
    samples_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport, AdError>
where
    F: Fn(&mut Tape) -> Result<Var, AdError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(AdError::BadEps(eps));
    }
    let grads = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        worst: None,
        tol,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let coords: Vec<usize> = if n <= samples_per_param {
            (0..n).collect()
        } else {
            (0..samples_per_param)
                .map(|_| rng.gen_range(0..n))
                .collect()
        };
        for idx in coords {
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[idx]);
            let orig = store.get(id).data()[idx];
            let mut central = |h: f64| -> Result<f64, AdError> {
                store.get_mut(id).data_mut()[idx] = orig + h;
                let up = eval(store, &f)?;
                store.get_mut(id).data_mut()[idx] = orig - h;
                let down = eval(store, &f)?;
                store.get_mut(id).data_mut()[idx] = orig;
                Ok((up - down) / (2.0 * h))
            };
            let numeric = central(eps)?;
            let half = central(eps / 2.0)?;
            if (numeric - half).abs() > tol * numeric.abs().max(1.0) {
                report.skipped_kinks += 1;
                continue;
            }
            let rel_err = (analytic - numeric).abs() / analytic.abs().max(1.0);
            report.checked += 1;
            if report.worst.as_ref().is_none_or(|w| rel_err > w.rel_err) {
                report.worst = Some(GradCheckEntry {
                    param: store.name(id).to_string(),
                    index: idx,
                    analytic,
                    numeric,
                    rel_err,
                });
            }
        }
    }
    Ok(report)
}
