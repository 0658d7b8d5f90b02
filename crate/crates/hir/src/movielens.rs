//! MovieLens 100K file formats and the data-directory layout.
//!
//! * `u.data`, `uK.base`, `uK.test`: tab-separated
//!   `user item rating timestamp`, one rating per line, ratings 1–5.
//! * `u.item`: pipe-separated, Latin-1; only the leading id and the
//!   trailing 0/1 genre flags are interpreted, title bytes pass through
//!   untouched. The first flag is the "unknown" genre; an item with no
//!   flag set is assigned to it so every item belongs to a block.
//! * generic block files: `item_id<TAB>block_label`, one membership per
//!   line, for non-MovieLens decompositions.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hir_core::dataset::{RatingTriple, RatingsDataset};
use hir_core::itemspace::Decomposition;

/// Genre flag count in MovieLens 100K's `u.item`.
pub const ML100K_GENRES: usize = 19;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hir_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_int<T: core::str::FromStr>(path: &Path, line: usize, field: &[u8], what: &str) -> Result<T> {
    core::str::from_utf8(field)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            parse_err(
                path,
                line,
                format!("{what} is not an integer: {:?}", String::from_utf8_lossy(field)),
            )
        })
}

/// Parse a ratings file (`u.data` / `uK.base` / `uK.test`) into triples
/// carrying the original ids, in file order.
pub fn parse_ratings(path: &Path) -> Result<Vec<RatingTriple>> {
    let bytes = read_file(path)?;
    let mut out = Vec::new();
    for (lineno, line) in lines(&bytes) {
        let fields: Vec<&[u8]> = line.split(|&b| b == b'\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let user: u32 = parse_int(path, lineno, fields[0], "user id")?;
        let item: u32 = parse_int(path, lineno, fields[1], "item id")?;
        let rating: u8 = parse_int(path, lineno, fields[2], "rating")?;
        let timestamp: i64 = parse_int(path, lineno, fields[3], "timestamp")?;
        if !(1..=5).contains(&rating) {
            return Err(parse_err(path, lineno, format!("rating {rating} outside 1..=5")));
        }
        out.push(RatingTriple {
            user,
            item,
            rating,
            timestamp,
        });
    }
    Ok(out)
}

/// Serialize triples back to the tab-separated format (original ids).
pub fn write_ratings(path: &Path, triples: &[RatingTriple]) -> Result<()> {
    let mut buf = Vec::new();
    for t in triples {
        writeln!(buf, "{}\t{}\t{}\t{}", t.user, t.item, t.rating, t.timestamp).unwrap();
    }
    fs::write(path, buf).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a predefined split pair into a dataset over a catalogue of
/// `item_count` items.
pub fn load_split(base: &Path, test: &Path, item_count: usize) -> Result<RatingsDataset> {
    let train = parse_ratings(base)?;
    let test = parse_ratings(test)?;
    Ok(RatingsDataset::from_triples(train, test, item_count)?)
}

/// Parse `u.item` into the genre decomposition. `genre_count` is the
/// number of trailing 0/1 flags per line (19 for MovieLens 100K).
pub fn parse_item_blocks(path: &Path, genre_count: usize) -> Result<Decomposition> {
    let bytes = read_file(path)?;
    let mut memberships: Vec<(u32, Vec<usize>)> = Vec::new();
    let mut max_id = 0u32;
    for (lineno, line) in lines(&bytes) {
        let fields: Vec<&[u8]> = line.split(|&b| b == b'|').collect();
        if fields.len() != 5 + genre_count {
            return Err(parse_err(
                path,
                lineno,
                format!(
                    "expected {} pipe-separated fields, found {}",
                    5 + genre_count,
                    fields.len()
                ),
            ));
        }
        let id: u32 = parse_int(path, lineno, fields[0], "item id")?;
        if id == 0 {
            return Err(parse_err(path, lineno, "item id 0 is not allowed"));
        }
        let mut blocks = Vec::new();
        for (g, flag) in fields[fields.len() - genre_count..].iter().enumerate() {
            match *flag {
                b"0" => {}
                b"1" => blocks.push(g),
                other => {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!(
                            "genre flag {g} is not 0/1: {:?}",
                            String::from_utf8_lossy(other)
                        ),
                    ))
                }
            }
        }
        if blocks.is_empty() {
            blocks.push(0); // the "unknown" genre keeps coverage total
        }
        max_id = max_id.max(id);
        memberships.push((id, blocks));
    }
    if memberships.is_empty() {
        return Err(parse_err(path, 1, "item file is empty"));
    }
    let mut block_members: Vec<Vec<u32>> = vec![Vec::new(); genre_count];
    for (id, blocks) in &memberships {
        for &g in blocks {
            block_members[g].push(id - 1);
        }
    }
    // Genres no item carries are dropped; an empty block adds nothing to
    // the proximity structure. All 19 survive on the full MovieLens data.
    let (block_members, labels): (Vec<_>, Vec<_>) = block_members
        .into_iter()
        .enumerate()
        .filter(|(_, members)| !members.is_empty())
        .map(|(g, members)| {
            let label = if g == 0 {
                "unknown".to_string()
            } else {
                format!("genre{g:02}")
            };
            (members, label)
        })
        .unzip();
    Ok(Decomposition::new(max_id as usize, block_members, labels)?)
}

/// Parse the generic block format: `item_id<TAB>block_label` lines, one
/// membership per line, over a catalogue of `item_count` items. Blocks
/// are ordered by first appearance.
pub fn parse_blocks_generic(path: &Path, item_count: usize) -> Result<Decomposition> {
    let bytes = read_file(path)?;
    let mut labels: Vec<String> = Vec::new();
    let mut block_members: Vec<Vec<u32>> = Vec::new();
    for (lineno, line) in lines(&bytes) {
        let fields: Vec<&[u8]> = line.split(|&b| b == b'\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected `item_id<TAB>block_label`, found {} fields", fields.len()),
            ));
        }
        let id: u32 = parse_int(path, lineno, fields[0], "item id")?;
        if id == 0 || id as usize > item_count {
            return Err(parse_err(
                path,
                lineno,
                format!("item id {id} outside catalogue 1..={item_count}"),
            ));
        }
        let label = String::from_utf8_lossy(fields[1]).into_owned();
        let block = match labels.iter().position(|l| *l == label) {
            Some(b) => b,
            None => {
                labels.push(label);
                block_members.push(Vec::new());
                labels.len() - 1
            }
        };
        block_members[block].push(id - 1);
    }
    Ok(Decomposition::new(item_count, block_members, labels)?)
}

/// An unpacked MovieLens 100K directory: `u.item` plus the five
/// predefined split pairs `u1.base`/`u1.test` … `u5.base`/`u5.test`.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn item_file(&self) -> PathBuf {
        self.root.join("u.item")
    }

    pub fn ratings_file(&self) -> PathBuf {
        self.root.join("u.data")
    }

    pub fn fold_files(&self, fold: u32) -> (PathBuf, PathBuf) {
        (
            self.root.join(format!("u{fold}.base")),
            self.root.join(format!("u{fold}.test")),
        )
    }

    /// The genre decomposition; also fixes the catalogue size.
    pub fn decomposition(&self) -> Result<Decomposition> {
        parse_item_blocks(&self.item_file(), ML100K_GENRES)
    }

    pub fn load_fold(&self, fold: u32, item_count: usize) -> Result<RatingsDataset> {
        let (base, test) = self.fold_files(fold);
        load_split(&base, &test, item_count)
    }
}
