use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use log::{debug, info, warn};
use rayon::prelude::*;

use sgcontrol::config::{field_covariance, Experiment, ExperimentConfig, SWEEP_PARAMETERS};
use sgcontrol::randfield::{explained_variance, kl_decompose};
use sgcontrol::report::{self, SweepRow};
use sgcontrol::solver::simulate;

use crate::exit::Failure;

/// Where the artifacts of one invocation go.
pub struct Output {
    dir: PathBuf,
    prefix: String,
    timestamps: bool,
}

impl Output {
    pub fn new(config: &ExperimentConfig, dir_override: Option<&Path>, timestamps: bool) -> Result<Self, Failure> {
        let dir = dir_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(&config.output.dir));
        fs::create_dir_all(&dir)
            .map_err(|e| Failure::Validation(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Output {
            dir,
            prefix: config.output.prefix.clone(),
            timestamps,
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }

    fn write(&self, suffix: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.path(suffix);
        fs::write(&path, contents).map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn timestamp(&self) -> Option<String> {
        self.timestamps
            .then(|| humantime::format_rfc3339_seconds(SystemTime::now()).to_string())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
    Ok(ExperimentConfig::from_toml(&text)?)
}

fn summary_line(exp: &Experiment) -> String {
    let c = &exp.certificate;
    format!(
        "valid = {}, margin = {:.6e}, mu = {:.6e}, decay_guaranteed = {}",
        c.valid(),
        c.margin(),
        c.mu(),
        c.guarantees_decay()
    )
}

fn guarantee(exp: &Experiment) -> Result<(), Failure> {
    let c = &exp.certificate;
    if !c.valid() {
        Err(Failure::NoGuarantee(format!("dissipativity fails with margin {}", c.margin())))
    } else if !c.guarantees_decay() {
        Err(Failure::NoGuarantee(format!("certificate valid but mu = {} is not positive", c.mu())))
    } else {
        Ok(())
    }
}

pub fn kl(config: &ExperimentConfig, out: &Output) -> Result<(), Failure> {
    let field = config.field.as_ref().ok_or_else(|| {
        Failure::Validation("missing [field] block: kl needs field.kernel, field.variance and field.length_scale".into())
    })?;
    let m = config.basis.dims;
    let cov = field_covariance(field, config.material.sigma_star)?;
    info!("decomposing {} into {m} modes on {} nodes", cov.describe(), field.n_quad);
    let kl = kl_decompose(cov.as_ref(), config.grid.length, m, field.n_quad)?;
    let ev = explained_variance(&kl, cov.as_ref());

    out.write("kl_eigenvalues.txt", &report::kl_eigenvalues(&kl))?;
    out.write("kl_eigenfunctions.txt", &report::kl_eigenfunctions(&kl))?;
    out.write("kl_variance.txt", &report::explained_variance(&ev))?;

    println!("kernel: {}", kl.kernel);
    for (k, d) in kl.eigenvalues.iter().enumerate() {
        println!("d_{} = {d:.6e}", k + 1);
    }
    println!("explained variance ratio = {:.6}", ev.total);
    Ok(())
}

pub fn certify(config: &ExperimentConfig, out: &Output) -> Result<(), Failure> {
    let exp = Experiment::prepare(config)?;
    let text = report::certificate(&exp);
    out.write("certificate.txt", &text)?;
    print!("{text}");
    guarantee(&exp)
}

pub fn simulate_one(config: &ExperimentConfig, out: &Output) -> Result<(), Failure> {
    let exp = Experiment::prepare(config)?;
    info!("{}", summary_line(&exp));
    let setup = exp.simulation_setup()?;
    let series = simulate(&exp.system, exp.initial_state()?, &setup)?;
    let cert = report::certificate(&exp);
    out.write("series.txt", &series.to_text())?;
    out.write("meta.toml", &report::metadata(config, &cert, out.timestamp().as_deref()))?;

    let last = series.last();
    println!("{}", summary_line(&exp));
    println!("samples = {}, final t = {}, final L_normalized = {:.6e}", series.samples.len(), last.t, last.normalized);
    guarantee(&exp)
}

fn sweep_run(config: &ExperimentConfig, value: f64) -> (SweepRow, Option<String>) {
    let mut row = SweepRow {
        value,
        margin: None,
        mu: None,
        final_normalized: None,
        error: None,
    };
    let exp = match Experiment::prepare(config) {
        Ok(e) => e,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    row.margin = Some(exp.certificate.margin());
    row.mu = Some(exp.certificate.mu());
    let series = exp
        .simulation_setup()
        .and_then(|setup| Ok((setup, exp.initial_state()?)))
        .and_then(|(setup, init)| simulate(&exp.system, init, &setup));
    match series {
        Ok(s) => {
            row.final_normalized = Some(s.last().normalized);
            (row, Some(s.to_text()))
        }
        Err(e) => {
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

pub fn sweep(config: &ExperimentConfig, out: &Output, parameter: &str, values: &[f64], workers: usize) -> Result<(), Failure> {
    if !SWEEP_PARAMETERS.contains(&parameter) {
        return Err(Failure::Validation(format!(
            "unknown sweep parameter `{parameter}`; expected one of {}",
            SWEEP_PARAMETERS.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(Failure::Validation("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| config.with_parameter(parameter, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Validation(format!("cannot start {workers} workers: {e}")))?;
    info!("sweeping {parameter} over {} values with {workers} workers", values.len());
    let results: Vec<(SweepRow, Option<String>)> = pool.install(|| {
        configs
            .par_iter()
            .map(|(v, c)| {
                debug!("{parameter} = {v}: start");
                sweep_run(c, *v)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    for (i, ((row, series), (_, cfg))) in results.into_iter().zip(&configs).enumerate() {
        if let Some(text) = series {
            out.write(&format!("sweep_{parameter}_{i}_series.txt"), &text)?;
            let meta = format!("# {parameter} = {}\n{}", row.value, cfg.to_toml());
            out.write(&format!("sweep_{parameter}_{i}_meta.toml"), &meta)?;
        }
        if let Some(e) = &row.error {
            warn!("{parameter} = {}: {e}", row.value);
        }
        rows.push(row);
    }
    let summary = report::sweep_summary(parameter, &rows);
    out.write(&format!("sweep_{parameter}.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
