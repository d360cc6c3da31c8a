// probe: how extreme do forward horseshoe W draws get
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statdag::config::PriorConfig;
fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let priors = PriorConfig::default();
    let mut max_abs: f64 = 0.0;
    let mut n_huge = 0;
    let mut n_singularish = 0;
    for _ in 0..5000 {
        let hs = statdag::priors::HorseshoeState::sample_prior(2, &mut rng);
        let ns = statdag::priors::NoiseScale::sample_prior(2, &priors.stick_breaking, &mut rng).unwrap();
        let mut w = [0.0f64; 2];
        let mut idx = 0;
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    let sd = hs.prior_variance(i, j, ns.d[i]).sqrt();
                    w[idx] = sd * std_normal.sample(&mut rng);
                    idx += 1;
                }
            }
        }
        let det: f64 = 1.0 - w[0] * w[1];
        max_abs = max_abs.max(w[0].abs()).max(w[1].abs());
        if !w[0].is_finite() || !w[1].is_finite() { n_huge += 1; }
        if det.abs() < 1e-10 || !det.is_finite() { n_singularish += 1; }
    }
    println!("max |w| = {max_abs:e}, non-finite draws = {n_huge}, singular-ish = {n_singularish}");
}
