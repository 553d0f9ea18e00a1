use crate::{FeatureError, Result};
use std::path::{Path, PathBuf};

/// One utterance per line: `<utt_id>\t<wav_path>\t<speaker_id>\t<transcript>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub wav_path: PathBuf,
    pub speaker_id: String,
    pub transcript: String,
}

#[derive(Clone, Debug, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(FeatureError::BadManifest {
                    line: i + 1,
                    msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
                });
            }
            entries.push(ManifestEntry {
                utterance_id: fields[0].to_string(),
                wav_path: PathBuf::from(fields[1]),
                speaker_id: fields[2].to_string(),
                transcript: fields[3].to_string(),
            });
        }
        Ok(Manifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entries {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.utterance_id,
                e.wav_path.display(),
                e.speaker_id,
                e.transcript
            ));
        }
        std::fs::write(path, text).map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
