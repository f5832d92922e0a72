use nalgebra::DMatrix;
use nhpg_core::series::{read_csv_file, write_csv, CovariatePanel, DatedSeries, DATE_FORMAT};
use nhpg_core::synthetic::{canonical, generate_seeded, CovariateSpec, Scenario};
use nhpg_core::StatePath;

use crate::config::{CovariatesConfig, ScenarioConfig};
use crate::{Artifacts, Failure};

pub const Y_CSV: &str = "y.csv";
pub const COVARIATES_CSV: &str = "covariates.csv";
pub const TRUTH_MODEL: &str = "truth_model.json";
pub const TRUTH_PATH: &str = "truth_path.csv";
pub const FIT_CONFIG: &str = "fit.toml";

fn replay_panel(path: &std::path::Path) -> Result<CovariatePanel, Failure> {
    let columns = read_csv_file(path).map_err(Failure::ingest)?;
    let dates = columns.first().map(|c| c.dates().to_vec()).unwrap_or_default();
    let names = columns.iter().map(|c| c.name().to_string()).collect();
    let matrix = DMatrix::from_fn(dates.len(), columns.len(), |i, j| columns[j].values()[i]);
    CovariatePanel::new(dates, names, matrix).map_err(Failure::ingest)
}

pub fn scenario(cfg: &ScenarioConfig) -> Result<Scenario, Failure> {
    let mut scenario = match &cfg.model {
        Some(m) => Scenario {
            name: cfg.name.clone(),
            model: m.build().map_err(Failure::config)?,
            covariates: CovariateSpec::IidNormal,
            t: cfg.t,
            seed: cfg.seed,
        },
        None => canonical(&cfg.name, cfg.t, cfg.seed).ok_or_else(|| {
            Failure::Config(format!("unknown scenario `{}` and no [model] table given", cfg.name))
        })?,
    };
    match &cfg.covariates {
        None => {}
        Some(CovariatesConfig::IidNormal) => scenario.covariates = CovariateSpec::IidNormal,
        Some(CovariatesConfig::Ar1 { phi }) => scenario.covariates = CovariateSpec::Ar1 { phi: *phi },
        Some(CovariatesConfig::Replay { path }) => {
            if !path.is_file() {
                return Err(Failure::Ingest(format!("covariate file {} does not exist", path.display())));
            }
            scenario.covariates = CovariateSpec::Replay(replay_panel(path)?);
        }
    }
    scenario.validate().map_err(Failure::config)?;
    Ok(scenario)
}

/// A fit config for the generated files, with default sampler settings.
fn fit_config(name: &str) -> String {
    format!(
        "# Fit of the simulated `{name}` dataset in this directory.\n\
         output_dir = \"fit\"\n\
         \n\
         [data]\n\
         price = \"{Y_CSV}\"\n\
         covariates = [\"{COVARIATES_CSV}\"]\n\
         transform = \"price\"\n"
    )
}

fn truth_path_csv(y: &DatedSeries, truth: &StatePath) -> Result<Vec<u8>, Failure> {
    let io = |e: csv::Error| Failure::Io(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "state"]).map_err(io)?;
    for (d, s) in y.dates().iter().zip(truth.labels()) {
        w.write_record([d.format(DATE_FORMAT).to_string(), s.to_string()]).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

pub fn run(cfg: &ScenarioConfig) -> Result<Artifacts, Failure> {
    let scenario = scenario(cfg)?;
    let data = generate_seeded(&scenario).map_err(Failure::numerical)?;
    let io = |e: nhpg_core::Error| Failure::Io(e.to_string());

    let mut y = Vec::new();
    write_csv(&mut y, data.y.dates(), &[("y", data.y.values())]).map_err(io)?;
    let columns: Vec<Vec<f64>> = (0..data.panel.n_covariates())
        .map(|j| data.panel.column(j).values().to_vec())
        .collect();
    let named: Vec<(&str, &[f64])> = data
        .panel
        .names()
        .iter()
        .zip(&columns)
        .map(|(n, c)| (n.as_str(), c.as_slice()))
        .collect();
    let mut covariates = Vec::new();
    write_csv(&mut covariates, data.panel.dates(), &named).map_err(io)?;
    let path = truth_path_csv(&data.y, &data.truth)?;
    let mut model = scenario.model.to_json().map_err(io)?;
    model.push('\n');

    let mut artifacts = Artifacts::default();
    artifacts.add(Y_CSV, y);
    artifacts.add(COVARIATES_CSV, covariates);
    artifacts.add(TRUTH_MODEL, model.into_bytes());
    artifacts.add(TRUTH_PATH, path);
    artifacts.add(FIT_CONFIG, fit_config(&scenario.name).into_bytes());
    Ok(artifacts)
}
