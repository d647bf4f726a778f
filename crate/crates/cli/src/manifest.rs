use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vad_core::RunConfig;
use vad_teachers::TeacherSet;
use vad_train::BranchKind;

/// File name of the manifest copy written beside every command's outputs.
pub const MANIFEST_COPY: &str = "experiment.json";

/// Which configuration fields an ablation sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Single and combined proxy tasks: Seg, OFM, Seg+Pred, Seg+OFM, Seg+OFM+Pred.
    ProxyTasks,
    /// Motion branch as UNet, UNet+Att and UNet+Att+SCSE.
    AttentionMechanisms,
    /// Motion branch with attention at each position, SCSE off.
    AttentionPosition,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::ProxyTasks => "proxy_tasks",
            Ablation::AttentionMechanisms => "attention_mechanisms",
            Ablation::AttentionPosition => "attention_position",
        }
    }
}

/// Everything a command needs to reproduce an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub config: RunConfig,
    pub dataset_root: PathBuf,
    #[serde(default)]
    pub teacher_set: TeacherSet,
    pub branch_selection: Vec<BranchKind>,
    #[serde(default)]
    pub ablation: Option<Ablation>,
}

impl ExperimentManifest {
    pub fn new(config: RunConfig, dataset_root: impl Into<PathBuf>) -> Self {
        Self {
            config,
            dataset_root: dataset_root.into(),
            teacher_set: TeacherSet::oracle(),
            branch_selection: vec![BranchKind::AppearanceMotion, BranchKind::Motion],
            ablation: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !self.dataset_root.is_dir() {
            bail!(
                "dataset root {} does not exist",
                self.dataset_root.display()
            );
        }
        if self.branch_selection.is_empty() {
            bail!("branch_selection is empty");
        }
        for (i, b) in self.branch_selection.iter().enumerate() {
            if self.branch_selection[..i].contains(b) {
                bail!("branch {b:?} selected twice");
            }
        }
        Ok(())
    }

    pub fn selects(&self, kind: BranchKind) -> bool {
        self.branch_selection.contains(&kind)
    }

    /// Writes the provenance copy into `out`, which is created if needed.
    pub fn write_copy(&self, out: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join(MANIFEST_COPY);
        self.save(&path)?;
        Ok(path)
    }
}
