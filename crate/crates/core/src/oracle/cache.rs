//! LRU cache of string log-probabilities keyed by symbol-id sequence, with
//! an optional append-only spill file (`ids<TAB>logprob` per line).

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;
use rand::RngCore;

use super::{Capabilities, Oracle, OracleError, Seq};
use crate::alphabet::{Alphabet, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

pub struct QueryCache {
    entries: Mutex<LruCache<Seq, f64>>,
    spill: Option<Mutex<BufWriter<File>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

pub(crate) fn format_record(seq: &[Symbol], logprob: f64) -> String {
    let ids: Vec<String> = seq.iter().map(ToString::to_string).collect();
    format!("{}\t{:?}", ids.join(" "), logprob)
}

pub(crate) fn parse_record(line: &str) -> Option<(Seq, f64)> {
    let (ids, value) = line.split_once('\t')?;
    let seq = ids.split_whitespace().map(|t| t.parse().ok()).collect::<Option<Seq>>()?;
    let value: f64 = value.trim().parse().ok()?;
    (!value.is_nan()).then_some((seq, value))
}

/// Reads every well-formed record of a spill file. A truncated final line
/// (interrupted write) is ignored.
pub fn read_spill(path: &Path) -> io::Result<Vec<(Seq, f64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        if let Some(rec) = parse_record(&line?) {
            out.push(rec);
        }
    }
    Ok(out)
}

impl QueryCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("positive capacity");
        Self { entries: Mutex::new(LruCache::new(cap)), spill: None, hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    /// Cache backed by `path`: existing records are loaded, new answers appended.
    pub fn with_spill(capacity: usize, path: &Path) -> io::Result<Self> {
        let mut cache = Self::new(capacity);
        if path.exists() {
            let mut entries = cache.entries.lock().unwrap();
            for (seq, value) in read_spill(path)? {
                entries.put(seq, value);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        cache.spill = Some(Mutex::new(BufWriter::new(file)));
        Ok(cache)
    }

    pub fn get(&self, seq: &[Symbol]) -> Option<f64> {
        let found = self.entries.lock().unwrap().get(seq).copied();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn insert(&self, seq: Seq, logprob: f64) {
        if let Some(spill) = &self.spill {
            let mut w = spill.lock().unwrap();
            // A failed spill write only loses persistence, not correctness.
            let _ = writeln!(w, "{}", format_record(&seq, logprob));
        }
        self.entries.lock().unwrap().put(seq, logprob);
    }

    pub fn flush(&self) -> io::Result<()> {
        match &self.spill {
            Some(spill) => spill.lock().unwrap().flush(),
            None => Ok(()),
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.entries.lock().unwrap().len(),
        }
    }
}

impl Drop for QueryCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Oracle wrapper answering string queries from a [`QueryCache`] first.
///
/// Misses are dispatched under a single lock after re-checking the cache, so
/// each resident key reaches the backend at most once even under concurrent
/// callers.
pub struct CachedOracle<O> {
    inner: O,
    cache: QueryCache,
    dispatch: Mutex<()>,
}

impl<O: Oracle> CachedOracle<O> {
    pub fn new(inner: O, cache: QueryCache) -> Self {
        Self { inner, cache, dispatch: Mutex::new(()) }
    }

    pub fn cache(&self) -> &QueryCache {
        &self.cache
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn alphabet(&self) -> &Alphabet {
        self.inner.alphabet()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        let mut out: Vec<Option<Result<f64, OracleError>>> =
            seqs.iter().map(|s| self.cache.get(s).map(Ok)).collect();
        if out.iter().all(Option::is_some) {
            return out.into_iter().map(Option::unwrap).collect();
        }
        let _guard = self.dispatch.lock().unwrap();
        let mut pending: Vec<usize> = Vec::new();
        for (i, slot) in out.iter_mut().enumerate() {
            if slot.is_none() {
                match self.cache.entries.lock().unwrap().get(&seqs[i]).copied() {
                    Some(v) => *slot = Some(Ok(v)),
                    None => pending.push(i),
                }
            }
        }
        let queries: Vec<Seq> = pending.iter().map(|&i| seqs[i].clone()).collect();
        for (&i, answer) in pending.iter().zip(self.inner.logprob_batch(&queries)) {
            if let Ok(v) = answer {
                self.cache.insert(seqs[i].clone(), v);
            }
            out[i] = Some(answer);
        }
        out.into_iter().map(|slot| slot.expect("every slot answered")).collect()
    }

    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        self.inner.next_dist_batch(prefixes)
    }

    fn prefix_dists(&self, seq: &[Symbol]) -> Result<Vec<Vec<f64>>, OracleError> {
        self.inner.prefix_dists(seq)
    }

    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        self.inner.sample_sequence(rng, max_len)
    }
}
