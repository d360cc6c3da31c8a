// debug: find the failing forward draw
use statdag::config::{PriorConfig, SamplerSettings};
fn main() {
    let settings = SamplerSettings {
        n_basis: 5,
        rank: 2,
        mala_step_init: 0.05,
        rw_step_init: 0.6,
        lambda_step_init: 0.4,
        ..Default::default()
    };
    let opts = statdag::sampler::geweke::GewekeOptions {
        n_vars: 2, n_tasks: 2, n_time: 8, rounds: 1200,
        fault: statdag::sampler::geweke::GewekeFault::None,
    };
    match statdag::sampler::geweke::geweke_validate(&opts, &settings, &PriorConfig::default(), 7) {
        Ok(stats) => {
            for s in &stats { println!("{:24} z = {:+.3}", s.name, s.z); }
        }
        Err(e) => println!("ERR: {e}"),
    }
}
