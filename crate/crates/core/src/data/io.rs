//! Plain-text serialization for datasets and attribute tables.
//!
//! Both formats are line-oriented, versioned and byte-stable: serializing the
//! same in-memory value always produces identical bytes.
//!
//! Dataset layout:
//!
//! ```text
//! recveil-dataset v1
//! users <N>
//! items <M>
//! interactions <count>
//! seed <seed>
//! ratios <train> <val> <test>
//! [user-ids]   N lines, line i = external id of internal user i
//! [item-ids]   M lines
//! [interactions]  count lines: user<TAB>item<TAB>rating<TAB>t|v|e
//! ```
//!
//! Attribute layout: `recveil-attributes v1`, a `users <N>` line, then one
//! `0`/`1` label line per internal user id.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

use super::{AttributeTable, Interaction, InteractionDataset, Split, SplitRatios};

const DATASET_MAGIC: &str = "recveil-dataset v1";
const ATTR_MAGIC: &str = "recveil-attributes v1";

impl InteractionDataset {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{DATASET_MAGIC}")?;
        writeln!(w, "users {}", self.n_users())?;
        writeln!(w, "items {}", self.n_items())?;
        writeln!(w, "interactions {}", self.n_interactions())?;
        writeln!(w, "seed {}", self.seed())?;
        let r = self.ratios();
        writeln!(w, "ratios {} {} {}", r.train, r.val, r.test)?;
        writeln!(w, "[user-ids]")?;
        for id in self.user_ids() {
            writeln!(w, "{id}")?;
        }
        writeln!(w, "[item-ids]")?;
        for item in 0..self.n_items() {
            writeln!(w, "{}", self.item_external(item))?;
        }
        writeln!(w, "[interactions]")?;
        for (inter, split) in self.interactions().iter().zip(self.splits()) {
            let tag = match split {
                Split::Train => 't',
                Split::Val => 'v',
                Split::Test => 'e',
            };
            writeln!(w, "{}\t{}\t{}\t{}", inter.user, inter.item, inter.rating, tag)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((idx, Ok(line))) => Ok((idx + 1, line)),
                Some((idx, Err(e))) => Err(Error::parse(path, idx + 1, e.to_string())),
                None => Err(Error::parse(path, 0, format!("unexpected EOF, wanted {what}"))),
            }
        };

        let (line_no, magic) = next("header")?;
        if magic != DATASET_MAGIC {
            return Err(Error::parse(path, line_no, "not a recveil dataset file"));
        }
        let n_users = parse_header_count(path, &mut next, "users")?;
        let n_items = parse_header_count(path, &mut next, "items")?;
        let n_inter = parse_header_count(path, &mut next, "interactions")?;
        let seed = parse_header_count(path, &mut next, "seed")? as u64;
        let (line_no, ratios_line) = next("ratios")?;
        let ratios = parse_ratios_line(&ratios_line)
            .ok_or_else(|| Error::parse(path, line_no, "bad ratios line"))?;

        expect_section(path, &mut next, "[user-ids]")?;
        let mut user_ids = Vec::with_capacity(n_users);
        for _ in 0..n_users {
            user_ids.push(next("user id")?.1);
        }
        expect_section(path, &mut next, "[item-ids]")?;
        let mut item_ids = Vec::with_capacity(n_items);
        for _ in 0..n_items {
            item_ids.push(next("item id")?.1);
        }
        expect_section(path, &mut next, "[interactions]")?;
        let mut interactions = Vec::with_capacity(n_inter);
        let mut splits = Vec::with_capacity(n_inter);
        for _ in 0..n_inter {
            let (line_no, line) = next("interaction")?;
            let mut parts = line.split('\t');
            let mut field = || {
                parts
                    .next()
                    .ok_or_else(|| Error::parse(path, line_no, "short interaction line"))
            };
            let user: usize = field()?
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad user index"))?;
            let item: usize = field()?
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad item index"))?;
            let rating: f64 = field()?
                .parse()
                .map_err(|_| Error::parse(path, line_no, "bad rating"))?;
            let split = match field()? {
                "t" => Split::Train,
                "v" => Split::Val,
                "e" => Split::Test,
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("bad split tag {other:?}"),
                    ))
                }
            };
            interactions.push(Interaction { user, item, rating });
            splits.push(split);
        }

        InteractionDataset::from_parts(
            n_users,
            n_items,
            interactions,
            splits,
            user_ids,
            item_ids,
            seed,
            ratios,
        )
    }

    /// Serialize to an in-memory byte buffer (used by determinism checks).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }
}

fn parse_header_count(
    path: &Path,
    next: &mut impl FnMut(&str) -> Result<(usize, String)>,
    key: &str,
) -> Result<usize> {
    let (line_no, line) = next(key)?;
    let rest = line
        .strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::parse(path, line_no, format!("expected {key:?} line")))?;
    rest.parse()
        .map_err(|_| Error::parse(path, line_no, format!("bad {key} value")))
}

fn parse_ratios_line(line: &str) -> Option<SplitRatios> {
    let rest = line.strip_prefix("ratios")?.trim();
    let mut parts = rest.split_whitespace();
    let train = parts.next()?.parse().ok()?;
    let val = parts.next()?.parse().ok()?;
    let test = parts.next()?.parse().ok()?;
    Some(SplitRatios { train, val, test })
}

fn expect_section(
    path: &Path,
    next: &mut impl FnMut(&str) -> Result<(usize, String)>,
    name: &str,
) -> Result<()> {
    let (line_no, line) = next(name)?;
    if line != name {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected section {name}, got {line:?}"),
        ));
    }
    Ok(())
}

impl AttributeTable {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "{ATTR_MAGIC}")?;
            writeln!(w, "users {}", self.n_users())?;
            for label in self.labels() {
                writeln!(w, "{label}")?;
            }
            Ok(())
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let magic = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .unwrap_or_default();
        if magic != ATTR_MAGIC {
            return Err(Error::parse(path, 1, "not a recveil attributes file"));
        }
        let count_line = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .unwrap_or_default();
        let n: usize = count_line
            .strip_prefix("users")
            .map(str::trim)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(path, 2, "expected 'users <N>'"))?;
        let mut labels = Vec::with_capacity(n);
        for (idx, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.is_empty() {
                continue;
            }
            let label: u8 = line
                .parse()
                .map_err(|_| Error::parse(path, idx + 3, "bad label"))?;
            labels.push(label);
        }
        if labels.len() != n {
            return Err(Error::InvalidData(format!(
                "{}: expected {n} labels, found {}",
                path.display(),
                labels.len()
            )));
        }
        AttributeTable::from_labels(labels)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{split_dataset, RawInteraction};
    use super::*;

    fn sample_dataset() -> InteractionDataset {
        let mut input = Vec::new();
        for u in 0..4 {
            for i in 0..6 {
                input.push(RawInteraction {
                    user_ext: format!("u{u}"),
                    item_ext: format!("i{i}"),
                    rating: 0.5 + i as f64,
                    timestamp: 0,
                });
            }
        }
        split_dataset(&input, SplitRatios::DEFAULT, 11).unwrap()
    }

    #[test]
    fn dataset_roundtrip_and_byte_stability() {
        let ds = sample_dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.txt");
        ds.save(&path).unwrap();
        let loaded = InteractionDataset::load(&path).unwrap();
        assert_eq!(loaded.n_users(), ds.n_users());
        assert_eq!(loaded.n_items(), ds.n_items());
        assert_eq!(loaded.splits(), ds.splits());
        assert_eq!(loaded.interactions(), ds.interactions());
        assert_eq!(loaded.to_bytes(), ds.to_bytes());
    }

    #[test]
    fn attribute_roundtrip() {
        let table = AttributeTable::from_labels(vec![0, 1, 1, 0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attrs.txt");
        table.save(&path).unwrap();
        let loaded = AttributeTable::load(&path).unwrap();
        assert_eq!(loaded, table);
    }
}
