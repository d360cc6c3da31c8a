// probe: which round of the successive-conditional chain degenerates
use statdag::config::{PriorConfig, SamplerSettings};
use statdag::sampler::geweke::{debug_successive_probe, GewekeOptions};

fn main() {
    let settings = SamplerSettings {
        n_basis: 5,
        rank: 2,
        mala_step_init: 0.05,
        rw_step_init: 0.6,
        lambda_step_init: 0.4,
        ..Default::default()
    };
    let opts = GewekeOptions {
        n_vars: 2,
        n_tasks: 2,
        n_time: 8,
        rounds: 1200,
        fault: statdag::sampler::geweke::GewekeFault::None,
    };
    debug_successive_probe(&opts, &settings, &PriorConfig::default(), 7);
}
