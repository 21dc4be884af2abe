//! OpenEA-style dataset directories.
//!
//! Layout: `rel_triples_1` and `rel_triples_2` hold one `head\trelation\ttail`
//! line per triple, `ent_links` holds `source\ttarget` pairs. The train/test
//! split comes from `train_links`/`test_links` in the same pair format, or from
//! a ratio applied to a fixed-seed shuffle of `ent_links`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::{AlignedPair, AlignmentTask, KnowledgeGraph, Triple};
use crate::{rng, Error, Result};

pub const SOURCE_TRIPLES: &str = "rel_triples_1";
pub const TARGET_TRIPLES: &str = "rel_triples_2";
pub const LINKS: &str = "ent_links";
pub const TRAIN_LINKS: &str = "train_links";
pub const TEST_LINKS: &str = "test_links";

/// Shuffle seed for ratio-based splits; fixed so a directory always loads the
/// same way.
pub const SPLIT_SEED: u64 = 0x5EA_5EED;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Split {
    /// Use `train_links`/`test_links` when both exist, else the ratio.
    Auto { train_ratio: f64 },
    Ratio(f64),
    Files,
}

impl Default for Split {
    fn default() -> Self {
        Split::Auto { train_ratio: 0.3 }
    }
}

struct Vocab {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl Vocab {
    fn new() -> Self {
        Self {
            ids: HashMap::new(),
            names: Vec::new(),
        }
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(name.to_owned(), id);
        self.names.push(name.to_owned());
        id
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers, split on TAB.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let text = read(path)?;
    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let mut triples = Vec::new();
    for (line, fields) in records(&text) {
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Malformed {
                file: path.to_path_buf(),
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = entities.intern(fields[0]);
        let relation = relations.intern(fields[1]);
        let tail = entities.intern(fields[2]);
        triples.push(Triple::new(head, relation, tail));
    }
    KnowledgeGraph::new(entities.names, relations.names, triples)
}

struct LinkReader<'a> {
    source: HashMap<&'a str, usize>,
    target: HashMap<&'a str, usize>,
}

impl<'a> LinkReader<'a> {
    fn new(source: &'a KnowledgeGraph, target: &'a KnowledgeGraph) -> Self {
        let index = |g: &'a KnowledgeGraph| {
            g.entity_names()
                .iter()
                .enumerate()
                .map(|(i, n)| (n.as_str(), i))
                .collect()
        };
        Self {
            source: index(source),
            target: index(target),
        }
    }

    /// Parses a pair file, rejecting unknown and repeated entities. `seen`
    /// carries the 1-to-1 check across several files.
    fn read(
        &self,
        path: &Path,
        seen: &mut (HashSet<usize>, HashSet<usize>),
    ) -> Result<Vec<AlignedPair>> {
        let text = read(path)?;
        let mut pairs = Vec::new();
        for (line, fields) in records(&text) {
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Malformed {
                    file: path.to_path_buf(),
                    line,
                    message: format!("expected 2 tab-separated fields, found {}", fields.len()),
                });
            }
            let lookup = |map: &HashMap<&str, usize>, side, name: &str| {
                map.get(name).copied().ok_or_else(|| Error::UnknownEntity {
                    file: path.to_path_buf(),
                    line,
                    side,
                    name: name.to_owned(),
                })
            };
            let s = lookup(&self.source, "source", fields[0])?;
            let t = lookup(&self.target, "target", fields[1])?;
            let duplicate = |side, name: &str| Error::DuplicateEntity {
                file: path.to_path_buf(),
                line,
                side,
                name: name.to_owned(),
            };
            if !seen.0.insert(s) {
                return Err(duplicate("source", fields[0]));
            }
            if !seen.1.insert(t) {
                return Err(duplicate("target", fields[1]));
            }
            pairs.push((s, t));
        }
        Ok(pairs)
    }
}

/// Loads a task from an OpenEA-style directory.
///
/// Entity and relation ids are assigned in first-seen order over the triple
/// files. Entities that occur only in link files are rejected as unknown.
pub fn load_dataset(dir: &Path, split: Split) -> Result<AlignmentTask> {
    let source = load_graph(&dir.join(SOURCE_TRIPLES))?;
    let target = load_graph(&dir.join(TARGET_TRIPLES))?;
    let reader = LinkReader::new(&source, &target);

    let links = reader.read(&dir.join(LINKS), &mut Default::default())?;

    let has_split_files = dir.join(TRAIN_LINKS).is_file() && dir.join(TEST_LINKS).is_file();
    let ratio = match split {
        Split::Files => None,
        Split::Auto { .. } if has_split_files => None,
        Split::Auto { train_ratio } | Split::Ratio(train_ratio) => Some(train_ratio),
    };
    let (train, test) = match ratio {
        None => {
            let mut seen = Default::default();
            let train = reader.read(&dir.join(TRAIN_LINKS), &mut seen)?;
            let test = reader.read(&dir.join(TEST_LINKS), &mut seen)?;
            (train, test)
        }
        Some(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "train_ratio must be in [0, 1], got {r}"
                )));
            }
            let mut shuffled = links;
            shuffled.shuffle(&mut rng::seeded(SPLIT_SEED));
            let n_train = (r * shuffled.len() as f64).round() as usize;
            let test = shuffled.split_off(n_train);
            (shuffled, test)
        }
    };
    AlignmentTask::new(source, target, train, test)
}

fn write_file(path: PathBuf, body: &str) -> Result<()> {
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
}

fn triples_text(g: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for t in g.triples() {
        out.push_str(g.entity_name(t.head));
        out.push('\t');
        out.push_str(g.relation_name(t.relation));
        out.push('\t');
        out.push_str(g.entity_name(t.tail));
        out.push('\n');
    }
    out
}

fn pairs_text<'a>(task: &AlignmentTask, pairs: impl Iterator<Item = &'a AlignedPair>) -> String {
    let mut out = String::new();
    for &(s, t) in pairs {
        out.push_str(task.source.entity_name(s));
        out.push('\t');
        out.push_str(task.target.entity_name(t));
        out.push('\n');
    }
    out
}

/// Writes `task` in the directory layout read by [`load_dataset`], with
/// explicit split files.
pub fn write_dataset(task: &AlignmentTask, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir.join(SOURCE_TRIPLES), &triples_text(&task.source))?;
    write_file(dir.join(TARGET_TRIPLES), &triples_text(&task.target))?;
    let all = task.train_pairs.iter().chain(&task.test_pairs);
    write_file(dir.join(LINKS), &pairs_text(task, all))?;
    write_file(dir.join(TRAIN_LINKS), &pairs_text(task, task.train_pairs.iter()))?;
    write_file(dir.join(TEST_LINKS), &pairs_text(task, task.test_pairs.iter()))?;
    Ok(())
}
