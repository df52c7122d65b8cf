//! TOML run configuration with dotted-key command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use floorvec::data::GeneratorConfig;
use floorvec::model::ModelConfig;
use floorvec::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Everything a run can configure, in one file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

/// Load `path` (or defaults if `None`), apply `key=value` overrides, and
/// deserialize strictly: unknown keys anywhere are an error.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig> {
    let mut root: toml::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            text.parse()
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Value::Table(toml::map::Map::new()),
    };
    for ov in overrides {
        apply_override(&mut root, ov)?;
    }
    let cfg: AppConfig =
        AppConfig::deserialize(root).context("invalid configuration (unknown key or bad value)")?;
    Ok(cfg)
}

/// Write the effective configuration next to the run's outputs.
pub fn echo_config(cfg: &AppConfig, out_dir: &Path) -> Result<()> {
    let text = toml::to_string_pretty(cfg).context("serializing effective config")?;
    let path = out_dir.join("config.toml");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Set `a.b.c=value` inside the TOML tree, creating tables along the path.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override {spec:?} is not of the form key.path=value");
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} has an empty path segment");
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .with_context(|| format!("override {key:?}: {part:?} is not a table"))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node
        .as_table_mut()
        .with_context(|| format!("override {key:?}: parent is not a table"))?;
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

/// Interpret the text after `=` as TOML if possible, else as a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("wrapper key exists"),
        _ => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_load_without_a_file() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg, AppConfig::default());
    }

    #[test]
    fn overrides_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nepochs = 7\nbatch_size = 2\n").unwrap();
        let cfg =
            load_config(Some(&p), &["train.epochs=9".into(), "model.hidden=64".into()]).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.batch_size, 2);
        assert_eq!(cfg.model.hidden, 64);
    }

    #[test]
    fn unknown_keys_are_rejected_from_file_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[train]\nnot_a_field = 1\n").unwrap();
        assert!(load_config(Some(&p), &[]).is_err());
        assert!(load_config(None, &["train.not_a_field=1".into()]).is_err());
        assert!(load_config(None, &["typo_section.epochs=1".into()]).is_err());
    }

    #[test]
    fn override_values_parse_as_toml_types() {
        let cfg = load_config(
            None,
            &[
                "train.optim.lr=0.001".into(),
                "model.feat_fusion=false".into(),
                "model.backbone_channels=[8, 16]".into(),
                "model.anchor_mode=fixed_grid".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.train.optim.lr, 0.001);
        assert!(!cfg.model.feat_fusion);
        assert_eq!(cfg.model.backbone_channels, vec![8, 16]);
        assert_eq!(cfg.model.anchor_mode, floorvec::model::AnchorMode::FixedGrid);
    }

    #[test]
    fn malformed_overrides_are_rejected() {
        assert!(load_config(None, &["train.epochs".into()]).is_err());
        assert!(load_config(None, &["train..epochs=1".into()]).is_err());
    }

    #[test]
    fn echoed_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = load_config(None, &["train.epochs=3".into()]).unwrap();
        echo_config(&cfg, dir.path()).unwrap();
        let back = load_config(Some(&dir.path().join("config.toml")), &[]).unwrap();
        assert_eq!(cfg, back);
    }
}
