//! Run manifests for `cubicml search`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use cubicml::orchestrator::LoopConfig;
use cubicml::sim::{executor_by_name, Executor};
use cubicml::space::SearchSpace;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    space: PathBuf,
    executor: RawExecutor,
    #[serde(default)]
    seed: u64,
    out_dir: Option<PathBuf>,
    #[serde(default, rename = "loop")]
    loop_table: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExecutor {
    name: String,
    params: Option<PathBuf>,
}

/// A parsed manifest with every referenced file loaded. Relative paths are
/// resolved against the manifest's directory.
pub struct RunManifest {
    pub space_path: PathBuf,
    pub space: SearchSpace,
    pub executor: Box<dyn Executor>,
    pub loop_config: LoopConfig,
    pub out_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn require_file(p: &Path, what: &str) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{what} not found: {}", p.display())))
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read manifest {}: {e}", path.display())))?;
        let raw: RawManifest =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));

        let space_path = resolve(base, raw.space);
        require_file(&space_path, "space file")?;
        let space = SearchSpace::from_file(&space_path)?;

        let params = raw.executor.params.map(|p| resolve(base, p));
        if let Some(p) = &params {
            require_file(p, "simulator parameter file")?;
        }
        let executor = executor_by_name(&raw.executor.name, params.as_deref())?;

        if raw.loop_table.contains_key("seed") {
            return Err(CliError::Usage(format!(
                "manifest {}: set the seed at top level, not in [loop]",
                path.display()
            )));
        }
        let mut loop_config: LoopConfig = toml::Value::Table(raw.loop_table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("manifest {} [loop]: {e}", path.display())))?;
        loop_config.seed = raw.seed;

        Ok(RunManifest {
            space_path,
            space,
            executor,
            loop_config,
            out_dir: raw.out_dir.map(|p| resolve(base, p)),
        })
    }
}
