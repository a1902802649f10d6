//! `aqicast explain` — three views into the recorded best model per task:
//! permutation importance, a local ridge surrogate around one instance,
//! and partial-dependence sweeps.

use serde::Serialize;

use aqicast_core::dataset::{split_scenario, SupervisedDataset, Task};
use aqicast_core::explain::{
    lime_explain, pdp, permutation_importance, ImportanceTable, LimeConfig, LimeExplanation,
    PdpCurve,
};
use aqicast_core::ingest::CountrySeries;
use aqicast_core::models::{ModelSpec, TrainedModel};
use aqicast_core::scale::ScalerParams;

use crate::artifacts::{cell, sanitize, ArtifactSet, Provenance};
use crate::config::PipelineConfig;
use crate::errors::CliError;

/// Which explanation to produce; `None` on the command line means all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Permutation,
    Lime,
    Pdp,
}

#[derive(Serialize)]
struct ExplainArtifact<'a> {
    provenance: Provenance,
    task: &'static str,
    spec: &'a ModelSpec,
    permutation: Option<&'a ImportanceTable>,
    lime: Option<&'a LimeArtifact<'a>>,
    pdp: Option<&'a [NamedCurve]>,
}

/// The explained instance and the surrogate fitted around it.
#[derive(Serialize)]
struct LimeArtifact<'a> {
    country: Option<String>,
    /// Observation date of the instance's features.
    date: Option<String>,
    feature_names: &'a [String],
    x: Vec<f64>,
    explanation: LimeExplanation,
}

#[derive(Serialize)]
struct NamedCurve {
    name: String,
    #[serde(flatten)]
    curve: PdpCurve,
}

pub fn run(config: &PipelineConfig, method: Option<Method>) -> Result<(), CliError> {
    super::check_sidecar(config)?;
    let series = super::load_series(config)?;
    let wants = |m: Method| method.is_none() || method == Some(m);

    let mut set = ArtifactSet::new(config);
    for task in config.task.tasks() {
        let best = super::best_spec(config, task)?;
        let model = super::load_model(config, &best)?;
        let data = super::build_dataset(config, &series, task)?;
        let dir = format!("explain/{task}");

        // Permutation importance also backs the default feature choice for
        // the dependence sweeps, so it is computed unless only LIME was
        // asked for.
        let importance = if wants(Method::Permutation)
            || (wants(Method::Pdp) && config.pdp_features.is_empty())
        {
            Some(permutation_importance(
                &model,
                &data.x,
                &data.y,
                &data.feature_names,
                config.explain_repeats,
                config.seeds.explain,
            )?)
        } else {
            None
        };
        if wants(Method::Permutation) {
            let table = importance.as_ref().expect("importance computed above");
            let header = ["weight", "std", "feature"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| vec![cell(r.mean_drop), cell(r.std_drop), r.name.clone()])
                .collect();
            set.csv(&format!("{dir}/importance.csv"), &header, &rows)?;
        }

        let lime = if wants(Method::Lime) {
            let artifact = explain_instance(config, &series, &data, task, &model)?;
            set.json(&format!("{dir}/lime.json"), &artifact)?;
            Some(artifact)
        } else {
            None
        };

        let curves = if wants(Method::Pdp) {
            let mut curves = Vec::new();
            for index in pdp_feature_indices(config, &data, task, importance.as_ref())? {
                let curve = pdp(&model, &data.x, index, config.pdp_grid)?;
                let name = data.feature_names[index].clone();
                write_curve(&mut set, &dir, &name, &curve, task)?;
                curves.push(NamedCurve { name, curve });
            }
            Some(curves)
        } else {
            None
        };

        set.json(
            &format!("{dir}/explain.json"),
            &ExplainArtifact {
                provenance: Provenance::of(config),
                task: super::task_key(task),
                spec: &best,
                permutation: importance.as_ref().filter(|_| wants(Method::Permutation)),
                lime: lime.as_ref(),
                pdp: curves.as_deref(),
            },
        )?;
        if let Some(table) = &importance {
            if let Some(top) = table.rows.first() {
                eprintln!(
                    "explain: {task} top importance {} ({:.4})",
                    top.name, top.mean_drop
                );
            }
        }
    }
    set.finish()?;
    Ok(())
}

/// Picks the instance the surrogate explains: the latest observation of the
/// configured country, or the first dataset row when none is set.
fn explain_instance<'a>(
    config: &PipelineConfig,
    series: &[CountrySeries],
    data: &'a SupervisedDataset,
    task: Task,
    model: &TrainedModel,
) -> Result<LimeArtifact<'a>, CliError> {
    let (country, date, x) = match &config.country {
        Some(country) => {
            let split = split_scenario(series, task, &config.bands, &config.exclude_features)?;
            let row = split
                .scenario
                .into_iter()
                .find(|r| &r.country == country)
                .ok_or_else(|| {
                    CliError::Insufficient(format!(
                        "no scenario row for {country}; it needs at least two cleaned records"
                    ))
                })?;
            (Some(row.country), Some(row.date.to_string()), row.x)
        }
        None => {
            let key = &data.row_keys[0];
            (
                Some(key.country.clone()),
                Some(key.feature_date.to_string()),
                data.x[0].clone(),
            )
        }
    };
    let scaler = ScalerParams::fit(&data.x);
    let lime_config = LimeConfig {
        n_samples: config.lime_samples,
        kernel_width: None,
        seed: config.seeds.explain,
        target_class: None,
    };
    let explanation = lime_explain(model, &x, &scaler, &lime_config)?;
    Ok(LimeArtifact {
        country,
        date,
        feature_names: &data.feature_names,
        x,
        explanation,
    })
}

/// Resolves the dependence-sweep features: the configured names, or the
/// top three by permutation importance when none are configured.
fn pdp_feature_indices(
    config: &PipelineConfig,
    data: &SupervisedDataset,
    task: Task,
    importance: Option<&ImportanceTable>,
) -> Result<Vec<usize>, CliError> {
    if config.pdp_features.is_empty() {
        let table = importance.expect("importance computed when defaulting pdp features");
        return Ok(table.rows.iter().take(3).map(|r| r.feature).collect());
    }
    config
        .pdp_features
        .iter()
        .map(|name| {
            data.feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "pdp feature {name:?} is not in the {task} dataset; it may be excluded or \
                     exist only for the other task"
                    ))
                })
        })
        .collect()
}

/// One CSV per swept feature: `grid,value` for regression, long-format
/// `grid,value,class` for classification.
fn write_curve(
    set: &mut ArtifactSet,
    dir: &str,
    name: &str,
    curve: &PdpCurve,
    task: Task,
) -> Result<(), CliError> {
    let path = format!("{dir}/pdp_{}.csv", sanitize(name));
    match task {
        Task::Regression => {
            let header = ["grid", "value"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = curve
                .grid
                .iter()
                .zip(&curve.values)
                .map(|(g, v)| vec![cell(*g), cell(v[0])])
                .collect();
            set.csv(&path, &header, &rows)
        }
        Task::Classification => {
            let header = ["grid", "value", "class"].map(String::from).to_vec();
            let mut rows = Vec::new();
            for (g, values) in curve.grid.iter().zip(&curve.values) {
                for (class, v) in values.iter().enumerate() {
                    rows.push(vec![cell(*g), cell(*v), class.to_string()]);
                }
            }
            set.csv(&path, &header, &rows)
        }
    }
}
