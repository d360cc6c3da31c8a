//! Chain driver and the draw archive with its JSON-lines serialization.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loglik::{SpectralCtx, WhittleData};
use super::updates::{gibbs_sweep, FaultInjection};
use super::ChainState;
use crate::config::{PriorConfig, SamplerSettings};
use crate::error::{Error, Result};
use crate::series::{fourier_transform, whittle_frequencies, MatrixSeries};

/// One archived posterior draw (unrestricted; the projection map runs as a
/// separate post-processing step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    /// W in row-major order.
    pub w: Vec<f64>,
    pub d: Vec<f64>,
    #[serde(rename = "anglesRaw")]
    pub angles_raw: Vec<f64>,
    pub threshold: f64,
    pub xi: Vec<f64>,
    pub chi: Vec<f64>,
    pub eta: Vec<f64>,
    /// Cayley parameters of U; present only when the rotation update is on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub seed: u64,
    pub chain_id: usize,
    pub config_hash: String,
    pub n_vars: usize,
    pub n_tasks: usize,
    pub n_time: usize,
    pub n_basis: usize,
    pub rank: usize,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawArchive {
    pub meta: ArchiveMeta,
    pub draws: Vec<Draw>,
}

impl DrawArchive {
    /// JSON lines: a meta header line, then one flat record per draw.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            file,
            "{}",
            serde_json::to_string(&serde_json::json!({ "meta": self.meta }))?
        )?;
        for draw in &self.draws {
            writeln!(file, "{}", serde_json::to_string(draw)?)?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Schema("empty archive file".into()))??;
        #[derive(Deserialize)]
        struct Header {
            meta: ArchiveMeta,
        }
        let header: Header = serde_json::from_str(&header)
            .map_err(|e| Error::Schema(format!("bad archive header: {e}")))?;
        let mut draws = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            draws.push(serde_json::from_str(&line)?);
        }
        Ok(Self {
            meta: header.meta,
            draws,
        })
    }

    /// Weight matrices of all draws.
    pub fn weight_draws(&self) -> Result<Vec<crate::graph::DagWeights>> {
        self.draws
            .iter()
            .map(|d| crate::graph::DagWeights::from_row_major(self.meta.n_vars, &d.w))
            .collect()
    }
}

fn snapshot(state: &ChainState, priors: &PriorConfig) -> Draw {
    Draw {
        iteration: state.iteration,
        w: state.w.row_major(),
        d: state.noise.d.clone(),
        angles_raw: state.corr.angles_raw(&priors.polar),
        threshold: state.corr.threshold,
        xi: state.spectral.xi.iter().copied().collect(),
        chi: state.spectral.chi.iter().copied().collect(),
        eta: state.spectral.eta.iter().copied().collect(),
        rotation: state.rotation.clone(),
    }
}

/// Runs one chain on preprocessed data. Deterministic given
/// (seed, settings, priors, data). Burn-in sweeps adapt the proposal scales;
/// post-burn-in sweeps run with frozen scales and are archived every
/// `thin` iterations.
pub fn run_chain(
    data: &MatrixSeries,
    settings: &SamplerSettings,
    priors: &PriorConfig,
    seed: u64,
    chain_id: usize,
    config_hash: &str,
) -> Result<DrawArchive> {
    settings.validate()?;
    let fy = fourier_transform(data);
    let wdata = WhittleData::new(&fy);
    let ctx = SpectralCtx::new(
        settings.n_basis,
        settings.degree,
        &whittle_frequencies(data.n_time()),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChainState::init(
        data.n_vars(),
        data.n_tasks(),
        settings,
        priors,
        &mut rng,
    )?;

    let mut draws = Vec::with_capacity(settings.n_draws());
    for it in 0..settings.iterations {
        state.iteration = it;
        let adapting = it < settings.burnin;
        if !adapting {
            state.steps.frozen = true;
        }
        gibbs_sweep(
            &mut state,
            &wdata,
            &ctx,
            settings,
            priors,
            &mut rng,
            adapting,
            FaultInjection::None,
        )
        .map_err(|e| Error::ChainFailure {
            iteration: it,
            source: Box::new(e),
        })?;
        state.steps.record(it);
        if !adapting && (it - settings.burnin) % settings.thin == 0 {
            draws.push(snapshot(&state, priors));
        }
    }

    Ok(DrawArchive {
        meta: ArchiveMeta {
            seed,
            chain_id,
            config_hash: config_hash.to_string(),
            n_vars: data.n_vars(),
            n_tasks: data.n_tasks(),
            n_time: data.n_time(),
            n_basis: settings.n_basis,
            rank: settings.rank,
            iterations: settings.iterations,
            burnin: settings.burnin,
            thin: settings.thin,
        },
        draws,
    })
}
