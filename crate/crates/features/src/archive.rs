use crate::types::{FeatureKind, FeatureMatrix};
use crate::{FeatureError, Result};
use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 4] = b"DFAR";

/// Appends feature matrices to a binary archive and maintains a plain-text
/// index mapping utterance id -> byte offset.
pub struct ArchiveWriter {
    file: std::fs::File,
    index: Vec<(String, u64)>,
    archive_path: PathBuf,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ArchiveWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::create(path).map_err(io_err(path))?;
        file.write_all(MAGIC).map_err(io_err(path))?;
        file.write_all(&1u32.to_le_bytes()).map_err(io_err(path))?;
        Ok(ArchiveWriter {
            file,
            index: Vec::new(),
            archive_path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, features: &FeatureMatrix) -> Result<()> {
        let path = self.archive_path.clone();
        let offset = self
            .file
            .seek(SeekFrom::End(0))
            .map_err(io_err(&path))?;
        let id = features.utterance_id.as_bytes();
        let mut buf = Vec::with_capacity(16 + id.len() + features.data.len() * 4);
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&(features.frames as u32).to_le_bytes());
        buf.extend_from_slice(&(features.dims as u32).to_le_bytes());
        for &v in &features.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.file.write_all(&buf).map_err(io_err(&path))?;
        self.index.push((features.utterance_id.clone(), offset));
        Ok(())
    }

    /// Writes the index file next to the archive (`<archive>.idx`).
    pub fn finish(mut self) -> Result<PathBuf> {
        let path = self.archive_path.clone();
        self.file.flush().map_err(io_err(&path))?;
        let idx_path = index_path(&path);
        let mut text = String::new();
        for (id, off) in &self.index {
            text.push_str(&format!("{id}\t{off}\n"));
        }
        std::fs::write(&idx_path, text).map_err(io_err(&idx_path))?;
        Ok(idx_path)
    }
}

pub fn index_path(archive: &Path) -> PathBuf {
    let mut p = archive.as_os_str().to_owned();
    p.push(".idx");
    PathBuf::from(p)
}

/// Random-access reader over an archive + index pair.
pub struct ArchiveReader {
    file: std::fs::File,
    offsets: BTreeMap<String, u64>,
    path: PathBuf,
}

impl ArchiveReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(io_err(path))?;
        let mut header = [0u8; 8];
        file.read_exact(&mut header).map_err(io_err(path))?;
        if &header[0..4] != MAGIC {
            return Err(FeatureError::BadArchive(format!(
                "{}: bad magic",
                path.display()
            )));
        }
        let idx_path = index_path(path);
        let text = std::fs::read_to_string(&idx_path).map_err(io_err(&idx_path))?;
        let mut offsets = BTreeMap::new();
        for line in text.lines() {
            let (id, off) = line.split_once('\t').ok_or_else(|| {
                FeatureError::BadArchive(format!("{}: bad index line", idx_path.display()))
            })?;
            let off: u64 = off.parse().map_err(|_| {
                FeatureError::BadArchive(format!("{}: bad offset", idx_path.display()))
            })?;
            offsets.insert(id.to_string(), off);
        }
        Ok(ArchiveReader {
            file,
            offsets,
            path: path.to_path_buf(),
        })
    }

    pub fn utterance_ids(&self) -> impl Iterator<Item = &String> {
        self.offsets.keys()
    }

    pub fn read(&mut self, utterance_id: &str, speaker_id: &str, kind: FeatureKind) -> Result<FeatureMatrix> {
        let path = self.path.clone();
        let &offset = self
            .offsets
            .get(utterance_id)
            .ok_or_else(|| FeatureError::UnknownUtterance(utterance_id.to_string()))?;
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(io_err(&path))?;
        let mut len4 = [0u8; 4];
        self.file.read_exact(&mut len4).map_err(io_err(&path))?;
        let id_len = u32::from_le_bytes(len4) as usize;
        let mut id = vec![0u8; id_len];
        self.file.read_exact(&mut id).map_err(io_err(&path))?;
        let stored_id = String::from_utf8(id)
            .map_err(|_| FeatureError::BadArchive("non-utf8 utterance id".into()))?;
        if stored_id != utterance_id {
            return Err(FeatureError::BadArchive(format!(
                "index points at {stored_id}, wanted {utterance_id}"
            )));
        }
        let mut shape = [0u8; 8];
        self.file.read_exact(&mut shape).map_err(io_err(&path))?;
        let frames = u32::from_le_bytes(shape[0..4].try_into().unwrap()) as usize;
        let dims = u32::from_le_bytes(shape[4..8].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; frames * dims * 4];
        self.file.read_exact(&mut raw).map_err(io_err(&path))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FeatureMatrix {
            data,
            frames,
            dims,
            kind,
            speaker_id: speaker_id.to_string(),
            utterance_id: utterance_id.to_string(),
        })
    }
}
