use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which coordinates of a parameter tensor to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coordinates {
    All,
    /// Random subset of at most `count` coordinates, chosen with `seed`.
    Sample { count: usize, seed: u64 },
}

/// Compares an analytic gradient with central finite differences.
///
/// Returns the maximum over probed coordinates of
/// `|fd - an| / max(|fd|, |an|, 1e-8)`.
///
/// Panics if `params` and `analytic` differ in length or `h <= 0`.
pub fn finite_diff_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64, coords: Coordinates) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_check_by(|up, down| f(up) - f(down), params, analytic, h, coords)
}

/// Like [`finite_diff_check`], but `diff(x + h·e, x − h·e)` returns
/// `f(x + h·e) − f(x − h·e)` directly, so callers can evaluate the
/// difference more accurately than two rounded loss values allow.
pub fn finite_diff_check_by<F>(mut diff: F, params: &[f64], analytic: &[f64], h: f64, coords: Coordinates) -> f64
where
    F: FnMut(&[f64], &[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    assert!(h > 0.0, "step must be positive");
    let mut up = params.to_vec();
    let mut down = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in probed(params.len(), coords) {
        let orig = params[i];
        up[i] = orig + h;
        down[i] = orig - h;
        let fd = diff(&up, &down) / (2.0 * h);
        up[i] = orig;
        down[i] = orig;
        let an = analytic[i];
        let denom = fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max((fd - an).abs() / denom);
    }
    worst
}

fn probed(len: usize, coords: Coordinates) -> Vec<usize> {
    match coords {
        Coordinates::All => (0..len).collect(),
        Coordinates::Sample { count, seed } if count < len => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, len, count).into_vec();
            idx.sort_unstable();
            idx
        }
        Coordinates::Sample { .. } => (0..len).collect(),
    }
}
