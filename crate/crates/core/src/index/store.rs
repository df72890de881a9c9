use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::corpus::{AnnotationEvent, CorpusIndex, Mutation, SearchField, SearchFilters, SearchHit};
use super::{snapshot, IndexError};
use crate::clock::SharedClock;
use crate::dndo::{from_json_value, to_json_value, Dndo};

pub const SNAPSHOT_SUFFIX: &str = ".snap";
pub const WAL_SUFFIX: &str = ".wal";
/// WAL entries accumulated before an automatic checkpoint.
pub const DEFAULT_CHECKPOINT_EVERY: usize = 2000;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WalEntry {
    Record(Value),
    Annotation(AnnotationEvent),
}

struct Corpus {
    index: RwLock<CorpusIndex>,
    wal: Mutex<WalFile>,
}

struct WalFile {
    file: File,
    path: PathBuf,
    entries: usize,
}

impl WalFile {
    fn open(path: PathBuf) -> Result<Self, IndexError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(WalFile { file, path, entries: 0 })
    }

    fn append(&mut self, entry: &WalEntry) -> Result<(), IndexError> {
        let mut line = serde_json::to_string(entry).expect("wal entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| io_err(&self.path, e))?;
        self.entries += 1;
        Ok(())
    }

    fn truncate(&mut self) -> Result<(), IndexError> {
        self.file
            .set_len(0)
            .and_then(|_| self.file.sync_all())
            .map_err(|e| io_err(&self.path, e))?;
        self.entries = 0;
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> IndexError {
    IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn validate_name(name: &str) -> Result<(), IndexError> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(IndexError::InvalidName(name.to_string()))
    }
}

/// Directory of named corpora, each persisted as a checksummed snapshot plus
/// a write-ahead log of records and annotations made since.
pub struct IndexStore {
    data_dir: PathBuf,
    corpora: RwLock<BTreeMap<String, Arc<Corpus>>>,
    clock: SharedClock,
    checkpoint_every: usize,
}

impl IndexStore {
    /// Loads every corpus found in `data_dir`, creating the directory if
    /// needed.
    pub fn open(data_dir: impl Into<PathBuf>, clock: SharedClock) -> Result<Self, IndexError> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir).map_err(|e| io_err(&data_dir, e))?;
        let mut corpora = BTreeMap::new();
        let listing = fs::read_dir(&data_dir).map_err(|e| io_err(&data_dir, e))?;
        for entry in listing {
            let entry = entry.map_err(|e| io_err(&data_dir, e))?;
            let file_name = entry.file_name().to_string_lossy().into_owned();
            let Some(name) = file_name.strip_suffix(SNAPSHOT_SUFFIX) else {
                continue;
            };
            if validate_name(name).is_err() {
                continue;
            }
            let corpus = load_corpus(&data_dir, name)?;
            corpora.insert(name.to_string(), Arc::new(corpus));
        }
        Ok(IndexStore {
            data_dir,
            corpora: RwLock::new(corpora),
            clock,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
        })
    }

    pub fn with_checkpoint_every(mut self, entries: usize) -> Self {
        self.checkpoint_every = entries.max(1);
        self
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    fn corpus(&self, name: &str) -> Result<Arc<Corpus>, IndexError> {
        self.corpora
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| IndexError::UnknownIndex(name.to_string()))
    }

    pub fn create(&self, name: &str) -> Result<(), IndexError> {
        validate_name(name)?;
        let mut corpora = self.corpora.write();
        if corpora.contains_key(name) {
            return Err(IndexError::IndexExists(name.to_string()));
        }
        let index = CorpusIndex::new(name);
        write_snapshot(&self.data_dir, &index)?;
        let mut wal = WalFile::open(wal_path(&self.data_dir, name))?;
        wal.truncate()?;
        corpora.insert(
            name.to_string(),
            Arc::new(Corpus {
                index: RwLock::new(index),
                wal: Mutex::new(wal),
            }),
        );
        Ok(())
    }

    /// Creates the corpus unless it already exists.
    pub fn ensure(&self, name: &str) -> Result<(), IndexError> {
        match self.create(name) {
            Ok(()) | Err(IndexError::IndexExists(_)) => Ok(()),
            Err(e) => Err(e),
        }
    }

    pub fn list_indexes(&self) -> Vec<String> {
        self.corpora.read().keys().cloned().collect()
    }

    pub fn delete(&self, name: &str) -> Result<(), IndexError> {
        let removed = self.corpora.write().remove(name);
        if removed.is_none() {
            return Err(IndexError::UnknownIndex(name.to_string()));
        }
        for path in [snapshot_path(&self.data_dir, name), wal_path(&self.data_dir, name)] {
            match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        Ok(())
    }

    /// Upserts one document. Durable once this returns.
    pub fn index_record(&self, name: &str, d: Dndo) -> Result<String, IndexError> {
        d.validate().map_err(|e| IndexError::InvalidDocument(e.to_string()))?;
        let corpus = self.corpus(name)?;
        let mut index = corpus.index.write();
        {
            let mut wal = corpus.wal.lock();
            wal.append(&WalEntry::Record(to_json_value(&d)))?;
        }
        let id = index.index_record(d);
        self.maybe_checkpoint(&corpus, &index)?;
        Ok(id)
    }

    /// Upserts a batch and writes a fresh snapshot.
    pub fn index_records(
        &self,
        name: &str,
        docs: impl IntoIterator<Item = Dndo>,
    ) -> Result<Vec<String>, IndexError> {
        let corpus = self.corpus(name)?;
        let mut index = corpus.index.write();
        let mut ids = Vec::new();
        for d in docs {
            d.validate().map_err(|e| IndexError::InvalidDocument(e.to_string()))?;
            ids.push(index.index_record(d));
        }
        self.checkpoint_locked(&corpus, &index)?;
        Ok(ids)
    }

    /// Appends the mutation to the log, then makes it visible.
    pub fn annotate(&self, name: &str, doc_id: &str, mutation: Mutation) -> Result<Dndo, IndexError> {
        let corpus = self.corpus(name)?;
        let mut index = corpus.index.write();
        let event = index.prepare_annotation(doc_id, mutation, self.clock.now_naive())?;
        corpus.wal.lock().append(&WalEntry::Annotation(event.clone()))?;
        let d = index.commit_annotation(event);
        self.maybe_checkpoint(&corpus, &index)?;
        Ok(d)
    }

    pub fn get(&self, name: &str, doc_id: &str) -> Result<Dndo, IndexError> {
        let corpus = self.corpus(name)?;
        let index = corpus.index.read();
        index
            .get(doc_id)
            .cloned()
            .ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))
    }

    /// Runs `f` with shared access to one corpus.
    pub fn read<R>(&self, name: &str, f: impl FnOnce(&CorpusIndex) -> R) -> Result<R, IndexError> {
        let corpus = self.corpus(name)?;
        let index = corpus.index.read();
        Ok(f(&index))
    }

    pub fn search(
        &self,
        name: &str,
        query: &str,
        field: Option<SearchField>,
        filters: &SearchFilters,
    ) -> Result<Vec<SearchHit>, IndexError> {
        self.read(name, |c| c.search(query, field, filters))?
    }

    /// Searches every corpus. Hits carry their corpus name and are merged
    /// with the same ordering as a single-corpus search.
    pub fn search_all(
        &self,
        query: &str,
        field: Option<SearchField>,
        filters: &SearchFilters,
    ) -> Result<Vec<(String, SearchHit)>, IndexError> {
        let mut merged = Vec::new();
        for name in self.list_indexes() {
            for hit in self.search(&name, query, field, filters)? {
                merged.push((name.clone(), hit));
            }
        }
        merged.sort_by(|(na, a), (nb, b)| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
                .then_with(|| na.cmp(nb))
        });
        Ok(merged)
    }

    /// Writes a snapshot of `name` and empties its log.
    pub fn checkpoint(&self, name: &str) -> Result<(), IndexError> {
        let corpus = self.corpus(name)?;
        let index = corpus.index.write();
        self.checkpoint_locked(&corpus, &index)
    }

    pub fn checkpoint_all(&self) -> Result<(), IndexError> {
        for name in self.list_indexes() {
            self.checkpoint(&name)?;
        }
        Ok(())
    }

    fn maybe_checkpoint(&self, corpus: &Corpus, index: &CorpusIndex) -> Result<(), IndexError> {
        if corpus.wal.lock().entries >= self.checkpoint_every {
            self.checkpoint_locked(corpus, index)?;
        }
        Ok(())
    }

    fn checkpoint_locked(&self, corpus: &Corpus, index: &CorpusIndex) -> Result<(), IndexError> {
        write_snapshot(&self.data_dir, index)?;
        corpus.wal.lock().truncate()
    }
}

fn snapshot_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{SNAPSHOT_SUFFIX}"))
}

fn wal_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{WAL_SUFFIX}"))
}

fn write_snapshot(dir: &Path, index: &CorpusIndex) -> Result<(), IndexError> {
    let path = snapshot_path(dir, index.name());
    let tmp = dir.join(format!(".{}{SNAPSHOT_SUFFIX}.tmp", index.name()));
    let bytes = snapshot::encode(index);
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(&bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

fn load_corpus(dir: &Path, name: &str) -> Result<Corpus, IndexError> {
    let snap = snapshot_path(dir, name);
    let bytes = fs::read(&snap).map_err(|e| io_err(&snap, e))?;
    let mut index = snapshot::decode(&bytes)?;
    let wal = wal_path(dir, name);
    let mut entries = 0;
    if wal.exists() {
        let f = File::open(&wal).map_err(|e| io_err(&wal, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| io_err(&wal, e))?;
            if line.trim().is_empty() {
                continue;
            }
            // A torn final line is the tail of an append that never
            // completed; its effect was never made visible.
            let Ok(entry) = serde_json::from_str::<WalEntry>(&line) else {
                break;
            };
            match entry {
                WalEntry::Record(raw) => {
                    let d = from_json_value(raw).map_err(|e| IndexError::CorruptSnapshot(e.to_string()))?;
                    index.index_record(d);
                }
                WalEntry::Annotation(event) => {
                    if event.seq > index.last_seq() && index.get(&event.doc_id).is_some() {
                        index.commit_annotation(event);
                    }
                }
            }
            entries += 1;
        }
    }
    let mut wal_file = WalFile::open(wal)?;
    wal_file.entries = entries;
    Ok(Corpus {
        index: RwLock::new(index),
        wal: Mutex::new(wal_file),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::dndo::{parse_timestamp, serialize_dndo};

    fn doc(i: usize) -> Dndo {
        let mut d = Dndo::empty(parse_timestamp("2020-07-03 16:56:42").unwrap());
        d.url = Some(format!("http://x.onion/listing/{i}"));
        d.title = Some(format!("Premium account {i}"));
        d.seller = Some(format!("seller{}", i % 3));
        d
    }

    fn open(dir: &Path) -> IndexStore {
        IndexStore::open(dir, Arc::new(ManualClock::at_default_epoch())).unwrap()
    }

    fn dump(store: &IndexStore, name: &str) -> Vec<String> {
        store.read(name, |c| c.docs().map(|(_, d)| serialize_dndo(d)).collect()).unwrap()
    }

    #[test]
    fn lifecycle() {
        let tmp = tempfile::tempdir().unwrap();
        let store = open(tmp.path());
        store.create("b").unwrap();
        store.create("a").unwrap();
        assert!(matches!(store.create("a"), Err(IndexError::IndexExists(_))));
        assert!(matches!(store.create("../x"), Err(IndexError::InvalidName(_))));
        assert_eq!(store.list_indexes(), vec!["a", "b"]);
        store.delete("b").unwrap();
        assert_eq!(store.list_indexes(), vec!["a"]);
        assert!(matches!(store.delete("b"), Err(IndexError::UnknownIndex(_))));
        assert_eq!(open(tmp.path()).list_indexes(), vec!["a"]);
    }

    #[test]
    fn wal_survives_reopen_without_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let (before, id) = {
            let store = open(tmp.path());
            store.create("m").unwrap();
            let id = store.index_record("m", doc(1)).unwrap();
            store.index_record("m", doc(2)).unwrap();
            store.annotate("m", &id, Mutation::Viewed).unwrap();
            store.annotate("m", &id, Mutation::Comment { text: "case-42".into() }).unwrap();
            (dump(&store, "m"), id)
        };
        let store = open(tmp.path());
        assert_eq!(dump(&store, "m"), before);
        let d = store.get("m", &id).unwrap();
        assert_eq!(d.analyst.has_viewed, Some(true));
        let hits = store.search("m", "case-42", Some(SearchField::Notes), &Default::default()).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn checkpoint_then_more_annotations() {
        let tmp = tempfile::tempdir().unwrap();
        let before = {
            let store = open(tmp.path());
            store.create("m").unwrap();
            let ids = store.index_records("m", (0..10).map(doc)).unwrap();
            store.annotate("m", &ids[0], Mutation::Flag { value: None }).unwrap();
            store.checkpoint("m").unwrap();
            store.annotate("m", &ids[0], Mutation::Flag { value: None }).unwrap();
            store.annotate("m", &ids[1], Mutation::Close).unwrap();
            dump(&store, "m")
        };
        let store = open(tmp.path());
        assert_eq!(dump(&store, "m"), before);
        assert_eq!(store.read("m", |c| c.annotation_log().len()).unwrap(), 3);
    }

    #[test]
    fn torn_wal_tail_is_ignored() {
        let tmp = tempfile::tempdir().unwrap();
        {
            let store = open(tmp.path());
            store.create("m").unwrap();
            store.index_record("m", doc(1)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(wal_path(tmp.path(), "m")).unwrap();
        f.write_all(b"{\"record\": {\"title\"").unwrap();
        let store = open(tmp.path());
        assert_eq!(store.read("m", |c| c.len()).unwrap(), 1);
    }

    #[test]
    fn corrupt_snapshot_is_reported() {
        let tmp = tempfile::tempdir().unwrap();
        {
            let store = open(tmp.path());
            store.create("m").unwrap();
            store.index_records("m", (0..3).map(doc)).unwrap();
        }
        let path = snapshot_path(tmp.path(), "m");
        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 5] ^= 0x20;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            IndexStore::open(tmp.path(), Arc::new(ManualClock::at_default_epoch())),
            Err(IndexError::CorruptSnapshot(_))
        ));
    }

    #[test]
    fn cross_corpus_search() {
        let tmp = tempfile::tempdir().unwrap();
        let store = open(tmp.path());
        store.create("a").unwrap();
        store.create("b").unwrap();
        store.index_records("a", (0..3).map(doc)).unwrap();
        store.index_records("b", (3..5).map(doc)).unwrap();
        let hits = store.search_all("account", None, &Default::default()).unwrap();
        assert_eq!(hits.len(), 5);
        assert_eq!(hits.iter().filter(|(n, _)| n == "b").count(), 2);
    }

    #[test]
    fn auto_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let store = open(tmp.path()).with_checkpoint_every(3);
        store.create("m").unwrap();
        for i in 0..7 {
            store.index_record("m", doc(i)).unwrap();
        }
        let wal = fs::read_to_string(wal_path(tmp.path(), "m")).unwrap();
        assert_eq!(wal.lines().count(), 1);
        assert_eq!(open(tmp.path()).read("m", |c| c.len()).unwrap(), 7);
    }
}
