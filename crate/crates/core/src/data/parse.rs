//! Parsers for MovieLens-style ratings and user-attribute files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, Result};

use super::RawInteraction;

/// Column layout for delimiter-separated ratings files that are not one of
/// the built-in MovieLens formats (covers LFM-style exports).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GenericFormat {
    pub delimiter: String,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub timestamp_col: Option<usize>,
}

/// Ratings file layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatingsFormat {
    /// Tab-separated `user<TAB>item<TAB>rating<TAB>timestamp` (u.data).
    Ml100k,
    /// `UserID::MovieID::Rating::Timestamp` (ratings.dat).
    Ml1m,
    /// Delimiter and column indices supplied by the caller.
    Generic(GenericFormat),
}

/// User-attribute file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsersFormat {
    /// Pipe-separated `id|age|gender|occupation|zip` (u.user).
    Ml100k,
    /// `UserID::Gender::Age::Occupation::Zip-code` (users.dat).
    Ml1m,
}

/// Gender encoding used by the loaders: M -> 0, F -> 1. Fixed so that group
/// indices and the positive class in attack reports are stable across runs.
pub const GENDER_MALE: u8 = 0;
pub const GENDER_FEMALE: u8 = 1;

/// Parse a ratings file into raw interactions, order preserved.
pub fn parse_ratings(path: &Path, format: &RatingsFormat) -> Result<Vec<RawInteraction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_ratings_line(&line, format).map_err(|msg| Error::parse(path, lineno, msg))?);
    }
    if out.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no interactions found",
            path.display()
        )));
    }
    Ok(out)
}

fn parse_ratings_line(
    line: &str,
    format: &RatingsFormat,
) -> std::result::Result<RawInteraction, String> {
    let (fields, user_col, item_col, rating_col, ts_col): (Vec<&str>, _, _, _, _) = match format {
        RatingsFormat::Ml100k => (line.split('\t').collect(), 0, 1, Some(2), Some(3)),
        RatingsFormat::Ml1m => (line.split("::").collect(), 0, 1, Some(2), Some(3)),
        RatingsFormat::Generic(g) => (
            line.split(g.delimiter.as_str()).collect(),
            g.user_col,
            g.item_col,
            g.rating_col,
            g.timestamp_col,
        ),
    };
    let field = |col: usize, what: &str| -> std::result::Result<&str, String> {
        fields
            .get(col)
            .copied()
            .ok_or_else(|| format!("missing {what} column {col}"))
    };
    let user_ext = field(user_col, "user")?.trim().to_string();
    let item_ext = field(item_col, "item")?.trim().to_string();
    if user_ext.is_empty() || item_ext.is_empty() {
        return Err("empty user or item id".to_string());
    }
    let rating = match rating_col {
        Some(col) => {
            let raw = field(col, "rating")?.trim();
            raw.parse::<f64>()
                .map_err(|_| format!("invalid rating {raw:?}"))?
        }
        None => 1.0,
    };
    if !rating.is_finite() {
        return Err(format!("non-finite rating {rating}"));
    }
    let timestamp = match ts_col {
        Some(col) => {
            let raw = field(col, "timestamp")?.trim();
            raw.parse::<i64>()
                .map_err(|_| format!("invalid timestamp {raw:?}"))?
        }
        None => 0,
    };
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    Ok(RawInteraction {
        user_ext,
        item_ext,
        rating,
        timestamp,
    })
}

/// Parse a user-attribute file into `external user id -> gender label`.
pub fn parse_attributes(path: &Path, format: UsersFormat) -> Result<HashMap<String, u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (user, gender_tok) = match format {
            UsersFormat::Ml100k => {
                let fields: Vec<&str> = line.split('|').collect();
                if fields.len() < 3 {
                    return Err(Error::parse(path, lineno, "expected id|age|gender|..."));
                }
                (fields[0].trim(), fields[2].trim())
            }
            UsersFormat::Ml1m => {
                let fields: Vec<&str> = line.split("::").collect();
                if fields.len() < 2 {
                    return Err(Error::parse(path, lineno, "expected UserID::Gender::..."));
                }
                (fields[0].trim(), fields[1].trim())
            }
        };
        let label = match gender_tok {
            "M" | "m" => GENDER_MALE,
            "F" | "f" => GENDER_FEMALE,
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown gender token {other:?}"),
                ))
            }
        };
        if out.insert(user.to_string(), label).is_some() {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate user id {user:?}"),
            ));
        }
    }
    Ok(out)
}
