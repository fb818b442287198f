//! Checkpoint plus JSON sidecar holding the configuration, vocabulary and
//! control scheme.

use super::{Model, ModelConfig};
use crate::control::ControlScheme;
use crate::error::{Error, Result};
use crate::tensor::{read_checkpoint, write_checkpoint};
use crate::text::vocab::Vocabulary;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub config: ModelConfig,
    pub scheme: ControlScheme,
    pub vocab: Vocabulary,
}

/// A trained model with everything needed to run it.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: Model,
    pub scheme: ControlScheme,
    pub vocab: Vocabulary,
}

/// `<checkpoint>.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_bundle(path: impl AsRef<Path>, bundle: &Bundle) -> Result<()> {
    let path = path.as_ref();
    write_checkpoint(path, bundle.model.params())?;
    let side =
        Sidecar { config: bundle.model.config().clone(), scheme: bundle.scheme.clone(), vocab: bundle.vocab.clone() };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Data(e.to_string()))?;
    let sp = sidecar_path(path);
    std::fs::write(&sp, json + "\n").map_err(|e| Error::io(&sp, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<Bundle> {
    let path = path.as_ref();
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", sp.display())))?;
    if side.vocab.len() != side.config.vocab_size {
        return Err(Error::Data(format!(
            "{}: vocabulary has {} entries, config says {}",
            sp.display(),
            side.vocab.len(),
            side.config.vocab_size
        )));
    }
    let params = read_checkpoint(path)?;
    let model = Model::from_params(side.config, params)?;
    Ok(Bundle { model, scheme: side.scheme, vocab: side.vocab })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny;
    use crate::position::PositionScheme;
    use crate::text::vocab::RESERVED;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundle_round_trip() {
        let vocab = crate::text::vocab::build_vocab(&["alpha beta gamma"], RESERVED + 3).unwrap();
        let cfg = ModelConfig { vocab_size: vocab.len(), ..tiny(PositionScheme::Reverse, true) };
        let model = Model::init(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bundle = Bundle { model, scheme: ControlScheme::Repilot, vocab };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_bundle(&path, &bundle).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back.model.params(), bundle.model.params());
        assert_eq!(back.model.config(), bundle.model.config());
        assert_eq!(back.scheme, ControlScheme::Repilot);
        assert_eq!(back.vocab, bundle.vocab);
    }
}
