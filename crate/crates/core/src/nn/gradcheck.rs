use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{NnError, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many randomly chosen entries per input tensor.
    pub max_entries_per_input: Option<usize>,
    /// Seed for entry sampling.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_entries_per_input: None,
            seed: 0,
        }
    }
}

/// Compare the analytic gradient of the scalar `f(inputs)` with central
/// finite differences. Returns the max over checked entries of
/// `|a - n| / max(1e-8, |a| + |n|)`.
///
/// `f` must be deterministic: any sampling inside it has to be re-seeded
/// on every call.
pub fn grad_check<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<f64, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, NnError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let entries: Vec<usize> = match opts.max_entries_per_input {
            Some(m) if m < input.len() => sample(&mut rng, input.len(), m).into_vec(),
            _ => (0..input.len()).collect(),
        };
        for idx in entries {
            let orig = input.data()[idx];
            probe[k].data_mut()[idx] = orig + opts.h;
            let plus = eval(&probe)?;
            probe[k].data_mut()[idx] = orig - opts.h;
            let minus = eval(&probe)?;
            probe[k].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic[k][idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
