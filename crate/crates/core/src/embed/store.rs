use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{EmbedError, EmbeddingMatrix, Layout, EMBEDDING_DIM};

const MAGIC: &[u8; 8] = b"SEBEMB01";
const MAGIC_FAMILY: &[u8; 6] = b"SEBEMB";
const HEADER_LEN: usize = 16;
const MANIFEST_HEADER: &str = "row_index\tsentence_id\tmodel_name\tdim";

/// Sentence embeddings keyed by sentence id.
///
/// On disk: a binary payload (`SEBEMB01`, u32 count, u32 dim, then
/// `count*dim` little-endian f32) and a sibling `.tsv` manifest mapping row
/// index to sentence id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    model_name: String,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

fn io_err(path: &Path, source: std::io::Error) -> EmbedError {
    EmbedError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl EmbeddingStore {
    pub fn new(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Manifest path for a payload path (`x.bin` -> `x.tsv`).
    pub fn manifest_path(path: &Path) -> PathBuf {
        path.with_extension("tsv")
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn dim(&self) -> usize {
        EMBEDDING_DIM
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(
        &mut self,
        sentence_id: impl Into<String>,
        values: &[f32],
    ) -> Result<(), EmbedError> {
        let id = sentence_id.into();
        if values.len() != EMBEDDING_DIM {
            return Err(EmbedError::Dimension {
                got: values.len(),
                expected: EMBEDDING_DIM,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite(id));
        }
        if self.index.contains_key(&id) {
            return Err(EmbedError::Duplicate(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * EMBEDDING_DIM..(i + 1) * EMBEDDING_DIM]
    }

    pub fn get(&self, sentence_id: &str) -> Option<&[f32]> {
        self.index.get(sentence_id).map(|&i| self.row(i))
    }

    pub fn matrix(&self, sentence_id: &str, layout: Layout) -> Result<EmbeddingMatrix, EmbedError> {
        let v = self
            .get(sentence_id)
            .ok_or_else(|| EmbedError::Missing(vec![sentence_id.to_string()]))?;
        let flat: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
        EmbeddingMatrix::reshape(sentence_id, &flat, layout)
    }

    /// Fails with every id from `ids` that has no embedding.
    pub fn check_complete<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), EmbedError> {
        let mut missing: Vec<String> = ids
            .into_iter()
            .filter(|id| !self.index.contains_key(*id))
            .map(str::to_string)
            .collect();
        missing.sort();
        missing.dedup();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(EmbedError::Missing(missing))
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbedError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        let mut buf = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(EMBEDDING_DIM as u32).to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| io_err(path, e))?;

        let mut manifest = String::from(MANIFEST_HEADER);
        manifest.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            manifest.push_str(&format!(
                "{i}\t{id}\t{}\t{EMBEDDING_DIM}\n",
                self.model_name
            ));
        }
        let mpath = Self::manifest_path(path);
        fs::write(&mpath, manifest).map_err(|e| io_err(&mpath, e))
    }

    pub fn read(path: &Path) -> Result<Self, EmbedError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        if bytes.len() < HEADER_LEN {
            return Err(EmbedError::Format(format!(
                "{} is too short for a header",
                path.display()
            )));
        }
        if &bytes[..8] != MAGIC {
            return Err(if &bytes[..6] == MAGIC_FAMILY {
                EmbedError::Format(format!(
                    "unsupported store version {:?}",
                    String::from_utf8_lossy(&bytes[6..8])
                ))
            } else {
                EmbedError::Format("bad magic".into())
            });
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if dim != EMBEDDING_DIM {
            return Err(EmbedError::Dimension {
                got: dim,
                expected: EMBEDDING_DIM,
            });
        }
        let payload = &bytes[HEADER_LEN..];
        let row_bytes = dim * 4;
        if payload.len() < count * row_bytes {
            return Err(EmbedError::Truncated {
                declared: count,
                actual: payload.len() / row_bytes,
            });
        }
        if payload.len() > count * row_bytes {
            return Err(EmbedError::Format(format!(
                "{} trailing bytes after {count} rows",
                payload.len() - count * row_bytes
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let mpath = Self::manifest_path(path);
        let text = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(EmbedError::Format(format!(
                "{}: bad manifest header",
                mpath.display()
            )));
        }
        let mut store = EmbeddingStore::new("");
        let mut ids = Vec::new();
        for (n, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 || cols[0] != n.to_string() {
                return Err(EmbedError::Format(format!(
                    "{}: malformed manifest row {}",
                    mpath.display(),
                    n + 2
                )));
            }
            if n == 0 {
                store.model_name = cols[2].to_string();
            } else if cols[2] != store.model_name {
                return Err(EmbedError::Format(format!(
                    "{}: mixed model names",
                    mpath.display()
                )));
            }
            if cols[3] != EMBEDDING_DIM.to_string() {
                return Err(EmbedError::Format(format!(
                    "{}: manifest dim {}",
                    mpath.display(),
                    cols[3]
                )));
            }
            ids.push(cols[1].to_string());
        }
        if ids.len() != count {
            return Err(EmbedError::CountMismatch {
                manifest: ids.len(),
                payload: count,
            });
        }
        for (i, id) in ids.into_iter().enumerate() {
            store.push(id, &data[i * dim..(i + 1) * dim])?;
        }
        Ok(store)
    }
}
