use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::warn;

use super::{Evaluator, GroundTruthRecord};
use crate::error::{Error, Result};
use crate::motif::Motif;

type Key = (String, u64, String);

fn key(motif: &Motif, seed: u64, fingerprint: &str) -> Key {
    (motif.key(), seed, fingerprint.to_string())
}

/// Append-only JSON-lines store of records, addressed by
/// `(motif, seed, config fingerprint)`.
#[derive(Debug)]
pub struct GroundTruthCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<Key, GroundTruthRecord>>,
}

impl GroundTruthCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        GroundTruthCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    /// Loads `path` if it exists. Unparseable lines are skipped with a warning.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        match std::fs::read_to_string(path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<GroundTruthRecord>(line) {
                        Ok(r) => {
                            entries.insert(key(&r.motif, r.seed, &r.config_fingerprint), r);
                        }
                        Err(e) => warn!("{}:{}: skipping corrupt cache line: {e}", path.display(), i + 1),
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(path, e)),
        }
        Ok(GroundTruthCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, motif: &Motif, seed: u64, fingerprint: &str) -> Option<GroundTruthRecord> {
        self.entries
            .lock()
            .unwrap()
            .get(&key(motif, seed, fingerprint))
            .cloned()
    }

    /// Records `r`, appending one whole line to the backing file.
    pub fn store(&self, r: &GroundTruthRecord) -> Result<()> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let line = serde_json::to_string(r)? + "\n";
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        entries.insert(key(&r.motif, r.seed, &r.config_fingerprint), r.clone());
        Ok(())
    }
}

/// Consults a cache before running the wrapped evaluator.
pub struct CachedEvaluator<'a, E: ?Sized> {
    pub inner: &'a E,
    pub cache: &'a GroundTruthCache,
}

impl<E: Evaluator + ?Sized> Evaluator for CachedEvaluator<'_, E> {
    fn evaluate(&self, motif: &Motif, seed: u64) -> Result<GroundTruthRecord> {
        let fp = self.inner.fingerprint();
        if let Some(r) = self.cache.lookup(motif, seed, &fp) {
            return Ok(r);
        }
        let r = self.inner.evaluate(motif, seed)?;
        self.cache.store(&r)?;
        Ok(r)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::MetricKind;

    fn rec(c: f64, fp: &str) -> GroundTruthRecord {
        GroundTruthRecord {
            motif: Motif::slope(c).unwrap(),
            metric: c / 2.0,
            metric_kind: MetricKind::Accuracy,
            seed: 1,
            config_fingerprint: fp.into(),
            repeat_seeds: vec![1],
        }
    }

    #[test]
    fn roundtrip_miss_and_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cache.jsonl");
        let c = GroundTruthCache::open(&p).unwrap();
        let r = rec(0.5, "aa");
        assert!(c.lookup(&r.motif, 1, "aa").is_none());
        c.store(&r).unwrap();
        assert_eq!(c.lookup(&r.motif, 1, "aa").unwrap(), r);
        assert!(c.lookup(&r.motif, 1, "bb").is_none());
        assert!(c.lookup(&r.motif, 2, "aa").is_none());

        std::fs::write(&p, std::fs::read_to_string(&p).unwrap() + "{not json\n").unwrap();
        let reopened = GroundTruthCache::open(&p).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.lookup(&r.motif, 1, "aa").unwrap(), r);
    }

    struct Counting(std::sync::atomic::AtomicUsize);

    impl Evaluator for Counting {
        fn evaluate(&self, motif: &Motif, seed: u64) -> Result<GroundTruthRecord> {
            self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let mut r = rec(motif.as_slope().unwrap(), "cc");
            r.seed = seed;
            Ok(r)
        }
        fn fingerprint(&self) -> String {
            "cc".into()
        }
    }

    #[test]
    fn cached_evaluator_skips_recompute() {
        let cache = GroundTruthCache::in_memory();
        let inner = Counting(Default::default());
        let ev = CachedEvaluator { inner: &inner, cache: &cache };
        let m = Motif::slope(0.3).unwrap();
        let a = ev.evaluate(&m, 9).unwrap();
        let b = ev.evaluate(&m, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(inner.0.load(std::sync::atomic::Ordering::SeqCst), 1);
    }
}
