use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numgrad::Matrix;

pub type TokenId = u32;

pub const UNK: &str = "<unk>";
pub const UNK_ID: TokenId = 0;

/// Token table with a dedicated UNK row at index 0.
///
/// Rows are held fixed during training; the trainable part of the model sits
/// on top of the pooled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEmbedding {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    table: Matrix,
}

impl VocabEmbedding {
    /// Builds a vocabulary from `(token, vector)` rows. The UNK row is the zero
    /// vector unless the rows already contain `<unk>`.
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut tokens = vec![UNK.to_string()];
        let mut index = HashMap::from([(UNK.to_string(), UNK_ID)]);
        let mut data = vec![0.0; dim];
        for (tok, vec) in rows {
            if vec.len() != dim {
                return Err(Error::DimensionMismatch {
                    op: "VocabEmbedding row",
                    expected: dim,
                    got: vec.len(),
                });
            }
            if tok == UNK {
                data[..dim].copy_from_slice(&vec);
                continue;
            }
            if index.contains_key(&tok) {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
            index.insert(tok.clone(), tokens.len() as TokenId);
            tokens.push(tok);
            data.extend_from_slice(&vec);
        }
        let table = Matrix::new(tokens.len(), dim, data)?;
        Ok(Self {
            tokens,
            index,
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Out-of-vocabulary tokens map to UNK.
    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn row(&self, id: TokenId) -> &[f64] {
        self.table.row(id as usize)
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    /// Mean of the rows for `ids`.
    pub fn mean_pool(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        if ids.is_empty() {
            return Err(Error::invalid("cannot pool an empty token sequence"));
        }
        let mut out = vec![0.0; self.dim()];
        for &id in ids {
            if id as usize >= self.len() {
                return Err(Error::invalid(format!("token id {id} out of range")));
            }
            for (o, v) in out.iter_mut().zip(self.row(id)) {
                *o += v;
            }
        }
        let inv = 1.0 / ids.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), self.table.row(i)))
    }
}

/// Splits a relation name on anything that is not alphanumeric.
pub fn tokenize_relation_name(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oov_maps_to_unk() {
        let v = VocabEmbedding::from_rows(2, [("a".to_string(), vec![1.0, 2.0])]).unwrap();
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.row(UNK_ID), &[0.0, 0.0]);
    }

    #[test]
    fn pooling() {
        let v = VocabEmbedding::from_rows(
            2,
            [("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![3.0, 0.0])],
        )
        .unwrap();
        assert_eq!(v.mean_pool(&[1]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(v.mean_pool(&[1, 2]).unwrap(), vec![2.0, 1.0]);
        assert!(v.mean_pool(&[]).is_err());
    }

    #[test]
    fn relation_names_split_on_separators() {
        assert_eq!(
            tokenize_relation_name("/people/person/place_of_birth"),
            vec!["people", "person", "place", "of", "birth"]
        );
        assert_eq!(tokenize_relation_name("located in"), vec!["located", "in"]);
    }
}
