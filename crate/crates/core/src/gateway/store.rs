use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::DecisionRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record for agent `{agent_id}` under config {fingerprint} already stored")]
    Duplicate { agent_id: String, fingerprint: String },
    #[error("{path}:{line}: corrupt record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("cannot persist record: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode record: {0}")]
    Encode(#[from] serde_json::Error),
}

/// Reads every record of a line-delimited store. A torn final line left by
/// an interrupted write is ignored; corruption anywhere else is an error.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<DecisionRecord>, StoreError> {
    Ok(scan(path.as_ref())?.0)
}

/// Returns the records and the byte length of the intact prefix.
fn scan(path: &Path) -> Result<(Vec<DecisionRecord>, u64), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut good_len = 0u64;
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        lineno += 1;
        if !line.ends_with('\n') {
            log::warn!("{}: dropping torn final line {lineno}", path.display());
            break;
        }
        let record = serde_json::from_str::<DecisionRecord>(line.trim_end()).map_err(|e| {
            StoreError::Corrupt { path: path.to_path_buf(), line: lineno, message: e.to_string() }
        })?;
        records.push(record);
        good_len += n as u64;
    }
    Ok((records, good_len))
}

/// Append-only JSON-lines store of decision records keyed by
/// `(agent_id, config_fingerprint)`.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    file: File,
    keys: HashSet<(String, String)>,
}

impl RecordStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let (records, good_len) = scan(&path)?;
        let mut file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(&path)?;
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        let keys = records
            .into_iter()
            .map(|r| (r.agent_id, r.config_fingerprint))
            .collect();
        Ok(Self { path, file, keys })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, agent_id: &str, fingerprint: &str) -> bool {
        self.keys.contains(&(agent_id.to_string(), fingerprint.to_string()))
    }

    pub fn count(&self, fingerprint: &str) -> usize {
        self.keys.iter().filter(|(_, f)| f == fingerprint).count()
    }

    pub fn agents(&self, fingerprint: &str) -> HashSet<String> {
        self.keys
            .iter()
            .filter(|(_, f)| f == fingerprint)
            .map(|(a, _)| a.clone())
            .collect()
    }

    /// Appends one line and flushes it before returning.
    pub fn persist(&mut self, record: &DecisionRecord) -> Result<(), StoreError> {
        let key = (record.agent_id.clone(), record.config_fingerprint.clone());
        if self.keys.contains(&key) {
            return Err(StoreError::Duplicate { agent_id: key.0, fingerprint: key.1 });
        }
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.keys.insert(key);
        Ok(())
    }

    pub fn records(&self, fingerprint: &str) -> Result<Vec<DecisionRecord>, StoreError> {
        Ok(load_records(&self.path)?
            .into_iter()
            .filter(|r| r.config_fingerprint == fingerprint)
            .collect())
    }
}
