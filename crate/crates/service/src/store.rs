//! Directory of canonical JSON documents: `instances/<id>.json`, `runs/<id>.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use flowshop_core::Instance;
use sha2::{Digest, Sha256};

use crate::runs::RunRecord;

const ID_LEN: usize = 16;

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("instances"))?;
        fs::create_dir_all(root.join("runs"))?;
        Ok(Store { root })
    }

    /// Content-hash prefix of the canonical instance document.
    pub fn instance_key(instance: &Instance) -> String {
        let digest = Sha256::digest(instance.to_json().as_bytes());
        format!("{digest:x}")[..ID_LEN].to_string()
    }

    fn instance_path(&self, key: &str) -> PathBuf {
        self.root.join("instances").join(format!("{key}.json"))
    }

    fn run_path(&self, id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{id}.json"))
    }

    pub fn put_instance(&self, instance: &Instance) -> io::Result<String> {
        let key = Self::instance_key(instance);
        write_atomic(&self.instance_path(&key), instance.to_json().as_bytes())?;
        Ok(key)
    }

    /// Canonical document text, if stored.
    pub fn instance_document(&self, key: &str) -> io::Result<Option<String>> {
        if !valid_key(key) {
            return Ok(None);
        }
        match fs::read_to_string(self.instance_path(key)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get_instance(&self, key: &str) -> io::Result<Option<Instance>> {
        self.instance_document(key)?
            .map(|text| {
                Instance::from_json(&text)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .transpose()
    }

    pub fn instance_keys(&self) -> io::Result<Vec<String>> {
        list_keys(&self.root.join("instances"))
    }

    pub fn put_run(&self, record: &RunRecord) -> io::Result<()> {
        let text = serde_json::to_vec(record).map_err(io::Error::other)?;
        write_atomic(&self.run_path(&record.id), &text)
    }

    pub fn load_runs(&self) -> io::Result<Vec<RunRecord>> {
        let mut out = Vec::new();
        for key in list_keys(&self.root.join("runs"))? {
            let text = fs::read(self.run_path(&key))?;
            match serde_json::from_slice(&text) {
                Ok(r) => out.push(r),
                Err(e) => tracing::warn!(run = %key, error = %e, "skipping unreadable run record"),
            }
        }
        Ok(out)
    }
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn list_keys(dir: &Path) -> io::Result<Vec<String>> {
    let mut keys: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".json").map(str::to_string)
        })
        .collect();
    keys.sort();
    Ok(keys)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowshop_core::Capacity;

    #[test]
    fn instance_round_trip_is_byte_equal() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let inst = Instance::new(
            "x",
            vec![vec![1, 2], vec![3, 4]],
            vec![Capacity::Bounded(1)],
            Some(3),
        )
        .unwrap();
        let key = store.put_instance(&inst).unwrap();
        assert_eq!(key.len(), ID_LEN);
        assert_eq!(
            store.instance_document(&key).unwrap().unwrap(),
            inst.to_json()
        );
        assert_eq!(store.get_instance(&key).unwrap().unwrap(), inst);
        assert_eq!(store.instance_keys().unwrap(), vec![key.clone()]);
        assert_eq!(store.put_instance(&inst).unwrap(), key);
        assert!(store.get_instance("../etc").unwrap().is_none());
    }
}
