//! Benchmark triple ingestion: vocabularies, integer-encoded splits, and the
//! filter index used by filtered ranking and negative sampling.
//!
//! Input files follow the public benchmark layout: a dataset directory with
//! `train.txt` / `valid.txt` / `test.txt`, UTF-8, one `head<TAB>relation<TAB>tail`
//! triple per line. Preprocessing emits `entities.dict` / `relations.dict`
//! (lines `id<TAB>name`, ids ascending from 0) plus a binary triple cache.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An integer-encoded fact `(head, relation, tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple { head, relation, tail }
    }

    /// Copy of `self` with the entity on `side` replaced.
    pub fn with_entity(&self, side: Side, entity: u32) -> Triple {
        match side {
            Side::Head => Triple { head: entity, ..*self },
            Side::Tail => Triple { tail: entity, ..*self },
        }
    }

    pub fn entity(&self, side: Side) -> u32 {
        match side {
            Side::Head => self.head,
            Side::Tail => self.tail,
        }
    }
}

/// Which entity slot of a triple an operation targets (corruption during
/// sampling, prediction side during evaluation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Head => Side::Tail,
            Side::Tail => Side::Head,
        }
    }
}

/// A triple still in string form, in file order.
pub type RawTriple = (String, String, String);

/// Dataset split names, also the CLI vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// Parse one split file into raw string triples, in file order, without
/// deduplication. Empty lines are skipped; a trailing `\r` is tolerated.
pub fn load_split(path: &Path) -> Result<Vec<RawTriple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (h, r, t) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) => (h, r, t),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "expected exactly 3 tab-separated fields (head, relation, tail)"
                        .to_string(),
                })
            }
        };
        triples.push((h.to_string(), r.to_string(), t.to_string()));
    }
    Ok(triples)
}

/// Entity and relation vocabularies with dense ids.
///
/// Ids are assigned in first-appearance order scanning train, then valid,
/// then test, so identical input files always produce identical assignments.
#[derive(Clone, Debug, Default)]
pub struct Vocab {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_ids: HashMap<String, u32>,
    relation_ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<u32> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<u32> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: u32) -> &str {
        &self.entity_names[id as usize]
    }

    pub fn relation_name(&self, id: u32) -> &str {
        &self.relation_names[id as usize]
    }

    fn intern_entity(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = self.entity_names.len() as u32;
        self.entity_names.push(name.to_string());
        self.entity_ids.insert(name.to_string(), id);
        id
    }

    fn intern_relation(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = self.relation_names.len() as u32;
        self.relation_names.push(name.to_string());
        self.relation_ids.insert(name.to_string(), id);
        id
    }

    /// Write `entities.dict` / `relations.dict` (`id<TAB>name`, ids ascending).
    pub fn write_dict_files(&self, dir: &Path) -> Result<()> {
        for (file, names) in [
            ("entities.dict", &self.entity_names),
            ("relations.dict", &self.relation_names),
        ] {
            let path = dir.join(file);
            let mut out = String::new();
            for (id, name) in names.iter().enumerate() {
                out.push_str(&format!("{id}\t{name}\n"));
            }
            fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_dict_files(dir: &Path) -> Result<Vocab> {
        let mut vocab = Vocab::default();
        for (file, is_entity) in [("entities.dict", true), ("relations.dict", false)] {
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (idx, line) in text.lines().enumerate() {
                let line = line.strip_suffix('\r').unwrap_or(line);
                if line.is_empty() {
                    continue;
                }
                let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                    path: path.clone(),
                    line: idx + 1,
                    message: "expected id<TAB>name".to_string(),
                })?;
                let id: u32 = id.parse().map_err(|_| Error::Parse {
                    path: path.clone(),
                    line: idx + 1,
                    message: format!("invalid id '{id}'"),
                })?;
                let assigned = if is_entity {
                    vocab.intern_entity(name)
                } else {
                    vocab.intern_relation(name)
                };
                if assigned != id {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: idx + 1,
                        message: format!("ids must be dense and ascending (expected {assigned}, found {id})"),
                    });
                }
            }
        }
        Ok(vocab)
    }
}

/// The three integer-encoded splits.
#[derive(Clone, Debug, Default)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl TripleStore {
    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(self.valid.iter()).chain(self.test.iter())
    }
}

/// Known-true-triple index: `(head, relation) -> tails` and
/// `(relation, tail) -> heads`, deduplicated and sorted for binary search.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    tails: HashMap<(u32, u32), Vec<u32>>,
    heads: HashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn build<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut index = FilterIndex::default();
        for t in triples {
            index.tails.entry((t.head, t.relation)).or_default().push(t.tail);
            index.heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        for set in index.tails.values_mut().chain(index.heads.values_mut()) {
            set.sort_unstable();
            set.dedup();
        }
        index
    }

    /// All known true tails for `(head, relation, ?)`, sorted.
    pub fn true_tails(&self, head: u32, relation: u32) -> &[u32] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// All known true heads for `(?, relation, tail)`, sorted.
    pub fn true_heads(&self, relation: u32, tail: u32) -> &[u32] {
        self.heads.get(&(relation, tail)).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.true_tails(triple.head, triple.relation)
            .binary_search(&triple.tail)
            .is_ok()
    }

    /// Candidates on `side` that would turn `triple` into a known true fact.
    pub fn known_entities(&self, triple: &Triple, side: Side) -> &[u32] {
        match side {
            Side::Head => self.true_heads(triple.relation, triple.tail),
            Side::Tail => self.true_tails(triple.head, triple.relation),
        }
    }
}

/// Build vocabulary, encoded splits, and the filter index over the union of
/// all three splits. Entities and relations appearing only in valid/test
/// still receive ids.
pub fn build_dataset(
    train: &[RawTriple],
    valid: &[RawTriple],
    test: &[RawTriple],
) -> (Vocab, TripleStore, FilterIndex) {
    let mut vocab = Vocab::default();
    let mut store = TripleStore::default();
    for (raws, out) in [
        (train, &mut store.train),
        (valid, &mut store.valid),
        (test, &mut store.test),
    ] {
        out.reserve(raws.len());
        for (h, r, t) in raws {
            let head = vocab.intern_entity(h);
            let relation = vocab.intern_relation(r);
            let tail = vocab.intern_entity(t);
            out.push(Triple { head, relation, tail });
        }
    }
    let filter = FilterIndex::build(store.all());
    (vocab, store, filter)
}

/// Table-style row counts for a loaded dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities   {}", self.entities)?;
        writeln!(f, "relations  {}", self.relations)?;
        writeln!(f, "train      {}", self.train)?;
        writeln!(f, "valid      {}", self.valid)?;
        write!(f, "test       {}", self.test)
    }
}

/// A fully loaded dataset: vocab, splits, and both filter indexes (the full
/// union index for filtered ranking, the train-only index for sampling).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocab,
    pub store: TripleStore,
    pub filter_all: FilterIndex,
    pub filter_train: FilterIndex,
}

impl Dataset {
    pub fn from_raw(train: &[RawTriple], valid: &[RawTriple], test: &[RawTriple]) -> Dataset {
        let (vocab, store, filter_all) = build_dataset(train, valid, test);
        let filter_train = FilterIndex::build(store.train.iter());
        Dataset {
            vocab,
            store,
            filter_all,
            filter_train,
        }
    }

    /// Load a dataset directory. A preprocessed cache (`entities.dict`,
    /// `relations.dict`, `triples.bin`) is used when complete; otherwise the
    /// raw TSV splits are parsed. Both paths yield identical datasets.
    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        if cache_files(dir).iter().all(|p| p.is_file()) {
            return Dataset::load_cached(dir);
        }
        let train_path = dir.join("train.txt");
        if !train_path.is_file() {
            return Err(Error::Config(format!(
                "missing train.txt in dataset directory {}",
                dir.display()
            )));
        }
        let train = load_split(&train_path)?;
        let valid = load_split(&dir.join("valid.txt"))?;
        let test = load_split(&dir.join("test.txt"))?;
        Ok(Dataset::from_raw(&train, &valid, &test))
    }

    fn load_cached(dir: &Path) -> Result<Dataset> {
        let vocab = Vocab::read_dict_files(dir)?;
        let store = read_triple_cache(dir, vocab.num_entities(), vocab.num_relations())?;
        let filter_all = FilterIndex::build(store.all());
        let filter_train = FilterIndex::build(store.train.iter());
        Ok(Dataset {
            vocab,
            store,
            filter_all,
            filter_train,
        })
    }

    /// Write the preprocessed form (dict files + binary triple cache) to `dir`.
    pub fn write_cache(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.vocab.write_dict_files(dir)?;
        write_triple_cache(dir, &self.store)
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            entities: self.vocab.num_entities(),
            relations: self.vocab.num_relations(),
            train: self.store.train.len(),
            valid: self.store.valid.len(),
            test: self.store.test.len(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }
}

const CACHE_MAGIC: &[u8; 8] = b"QKGCTRP1";

fn cache_files(dir: &Path) -> [PathBuf; 3] {
    [
        dir.join("entities.dict"),
        dir.join("relations.dict"),
        dir.join("triples.bin"),
    ]
}

fn write_triple_cache(dir: &Path, store: &TripleStore) -> Result<()> {
    let path = dir.join("triples.bin");
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&path, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    for split in [&store.train, &store.valid, &store.test] {
        w.write_all(&(split.len() as u64).to_le_bytes()).map_err(io)?;
    }
    for split in [&store.train, &store.valid, &store.test] {
        for t in split {
            w.write_all(&t.head.to_le_bytes()).map_err(io)?;
            w.write_all(&t.relation.to_le_bytes()).map_err(io)?;
            w.write_all(&t.tail.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn read_triple_cache(dir: &Path, num_entities: usize, num_relations: usize) -> Result<TripleStore> {
    let path = dir.join("triples.bin");
    let mut bytes = Vec::new();
    fs::File::open(&path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(&path, e))?;
    let malformed = |message: &str| Error::Parse {
        path: path.clone(),
        line: 0,
        message: message.to_string(),
    };
    if bytes.len() < 8 + 24 || &bytes[..8] != CACHE_MAGIC {
        return Err(malformed("not a triple cache (bad magic)"));
    }
    let mut counts = [0usize; 3];
    for (i, count) in counts.iter_mut().enumerate() {
        let at = 8 + i * 8;
        *count = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    }
    let body = &bytes[32..];
    let total: usize = counts.iter().sum();
    if body.len() != total * 12 {
        return Err(malformed("truncated triple cache"));
    }
    let mut triples = body.chunks_exact(12).map(|chunk| {
        let head = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let relation = u32::from_le_bytes(chunk[4..8].try_into().unwrap());
        let tail = u32::from_le_bytes(chunk[8..12].try_into().unwrap());
        Triple { head, relation, tail }
    });
    let mut store = TripleStore::default();
    for (count, out) in counts
        .iter()
        .zip([&mut store.train, &mut store.valid, &mut store.test])
    {
        out.extend(triples.by_ref().take(*count));
    }
    for t in store.all() {
        if t.head as usize >= num_entities || t.tail as usize >= num_entities {
            return Err(malformed("entity id out of vocabulary range"));
        }
        if t.relation as usize >= num_relations {
            return Err(malformed("relation id out of vocabulary range"));
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(h: &str, r: &str, t: &str) -> RawTriple {
        (h.to_string(), r.to_string(), t.to_string())
    }

    #[test]
    fn load_split_parses_tabs_and_rejects_spaces() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.txt");
        fs::write(&good, "A\tlikes\tB\n").unwrap();
        assert_eq!(load_split(&good).unwrap(), vec![raw("A", "likes", "B")]);

        let empty = dir.path().join("empty.txt");
        fs::write(&empty, "").unwrap();
        assert!(load_split(&empty).unwrap().is_empty());

        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "A likes B\n").unwrap();
        match load_split(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }

        assert!(matches!(
            load_split(&dir.path().join("nope.txt")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_split_tolerates_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crlf.txt");
        fs::write(&path, "A\tr\tB\r\nC\tr\tD\r\n").unwrap();
        let triples = load_split(&path).unwrap();
        assert_eq!(triples.len(), 2);
        assert_eq!(triples[1], raw("C", "r", "D"));
    }

    #[test]
    fn build_dataset_covers_all_splits() {
        let train = vec![raw("A", "r1", "B")];
        let test = vec![raw("B", "r1", "C")];
        let (vocab, store, filter) = build_dataset(&train, &[], &test);
        assert_eq!(vocab.num_entities(), 3);
        assert_eq!(vocab.num_relations(), 1);
        assert_eq!(store.train.len(), 1);
        let a = vocab.entity_id("A").unwrap();
        let b = vocab.entity_id("B").unwrap();
        let r1 = vocab.relation_id("r1").unwrap();
        assert_eq!(filter.true_tails(a, r1), &[b]);
    }

    #[test]
    fn id_assignment_is_first_appearance_order() {
        let train = vec![raw("X", "r", "Y"), raw("Y", "s", "Z")];
        let (vocab, _, _) = build_dataset(&train, &[], &[]);
        assert_eq!(vocab.entity_id("X"), Some(0));
        assert_eq!(vocab.entity_id("Y"), Some(1));
        assert_eq!(vocab.entity_id("Z"), Some(2));
        assert_eq!(vocab.relation_id("r"), Some(0));
        assert_eq!(vocab.relation_id("s"), Some(1));
        assert_eq!(vocab.entity_name(2), "Z");
    }

    #[test]
    fn encode_decode_roundtrip() {
        let train = vec![raw("A", "r", "B"), raw("B", "r", "C"), raw("A", "s", "C")];
        let valid = vec![raw("C", "r", "A")];
        let (vocab, store, _) = build_dataset(&train, &valid, &[]);
        let decoded: Vec<RawTriple> = store
            .train
            .iter()
            .map(|t| {
                raw(
                    vocab.entity_name(t.head),
                    vocab.relation_name(t.relation),
                    vocab.entity_name(t.tail),
                )
            })
            .collect();
        assert_eq!(decoded, train);
    }

    #[test]
    fn filter_index_contains_every_stored_triple() {
        let raws: Vec<RawTriple> = (0..20)
            .map(|i| raw(&format!("e{}", i % 7), &format!("r{}", i % 3), &format!("e{}", (i * 3) % 7)))
            .collect();
        let (_, store, filter) = build_dataset(&raws, &[], &[]);
        for t in store.all() {
            assert!(filter.contains(t));
            assert!(filter.true_heads(t.relation, t.tail).contains(&t.head));
        }
    }

    #[test]
    fn duplicates_kept_in_split_deduped_in_filter() {
        let train = vec![raw("A", "r", "B"), raw("A", "r", "B")];
        let (vocab, store, filter) = build_dataset(&train, &[], &[]);
        assert_eq!(store.train.len(), 2);
        let a = vocab.entity_id("A").unwrap();
        let r = vocab.relation_id("r").unwrap();
        assert_eq!(filter.true_tails(a, r).len(), 1);
    }

    #[test]
    fn determinism_across_builds() {
        let train = vec![raw("n1", "r", "n2"), raw("n3", "r", "n1")];
        let first = build_dataset(&train, &[], &[]);
        let second = build_dataset(&train, &[], &[]);
        assert_eq!(first.1.train, second.1.train);
    }

    #[test]
    fn cache_roundtrip_matches_tsv_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.txt"), "A\tr\tB\nB\tr\tC\n").unwrap();
        fs::write(dir.path().join("valid.txt"), "C\tr\tA\n").unwrap();
        fs::write(dir.path().join("test.txt"), "A\tr\tC\n").unwrap();
        let from_tsv = Dataset::load_dir(dir.path()).unwrap();
        from_tsv.write_cache(dir.path()).unwrap();
        let from_cache = Dataset::load_dir(dir.path()).unwrap();
        assert_eq!(from_tsv.store.train, from_cache.store.train);
        assert_eq!(from_tsv.store.valid, from_cache.store.valid);
        assert_eq!(from_tsv.store.test, from_cache.store.test);
        assert_eq!(from_tsv.vocab.num_entities(), from_cache.vocab.num_entities());
        assert_eq!(from_cache.vocab.entity_name(0), "A");
    }

    #[test]
    fn missing_train_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        match Dataset::load_dir(dir.path()) {
            Err(Error::Config(msg)) => assert!(msg.contains("missing train.txt")),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
