//! Boolean oracles f: {0,1}^n -> {0,1} as explicit truth tables, plus the
//! linear family used by the Bernstein-Vazirani protocol and a line-oriented
//! text format for exchanging tables.

use std::fmt;

use crate::error::{Error, Result};
use crate::timebin::BitString;

/// Class of a truth table under the promise taxonomy: constant, balanced
/// (exactly half the inputs map to 1), or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleClass {
    Constant,
    Balanced,
    Neither,
}

/// A Boolean function on n bits, stored as its full truth table in
/// lexicographic input order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OracleSpec {
    n: usize,
    /// table[x.lex_index()] = f(x), each entry 0 or 1.
    table: Vec<u8>,
    /// Human-readable tag used in reports and CSV output.
    pub name: String,
}

impl OracleSpec {
    pub fn new(n: usize, table: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        if table.len() != 1 << n {
            return Err(Error::LengthMismatch {
                what: "oracle truth table",
                expected: 1 << n,
                got: table.len(),
            });
        }
        if let Some(&bad) = table.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidBit { value: bad });
        }
        Ok(Self {
            n,
            table,
            name: name.into(),
        })
    }

    /// The constant oracle f(x) = value.
    pub fn constant(n: usize, value: u8) -> Result<Self> {
        if value > 1 {
            return Err(Error::InvalidBit { value });
        }
        Self::new(n, vec![value; 1 << n], format!("const_{value}"))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: &BitString) -> Result<u8> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "oracle input",
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(self.table[x.lex_index()])
    }

    /// f(x) by lexicographic input index.
    pub fn value_by_index(&self, lex_index: usize) -> u8 {
        self.table[lex_index]
    }

    /// (-1)^{f(x)} as a real sign.
    pub fn sign_by_index(&self, lex_index: usize) -> f64 {
        if self.table[lex_index] == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn table(&self) -> &[u8] {
        &self.table
    }

    /// Classifies the table by its number of 1 outputs.
    pub fn classify(&self) -> OracleClass {
        let ones: usize = self.table.iter().map(|&b| b as usize).sum();
        if ones == 0 || ones == self.table.len() {
            OracleClass::Constant
        } else if 2 * ones == self.table.len() {
            OracleClass::Balanced
        } else {
            OracleClass::Neither
        }
    }

    /// Serializes to the two-line text format parsed by
    /// [`parse_truth_table`].
    pub fn to_truth_table_string(&self) -> String {
        let row: String = self
            .table
            .iter()
            .map(|&b| if b == 0 { '0' } else { '1' })
            .collect();
        format!("n={}\n{}\n", self.n, row)
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// The linear oracle f_j(x) = x . j mod 2.
pub fn oracle_bv(j: &BitString) -> OracleSpec {
    let n = j.len();
    let table = BitString::all(n)
        .map(|x| x.dot(j).expect("equal lengths"))
        .collect();
    OracleSpec::new(n, table, format!("f_{j}")).expect("table built to size")
}

/// The pointwise complement 1 - f(x). Complementing flips every phase
/// (-1)^{f(x)}, a global sign, so it leaves every outcome distribution
/// unchanged; the visibility analysis uses the pair (f, complement) to cancel
/// slow drifts between runs.
pub fn oracle_complement(f: &OracleSpec) -> OracleSpec {
    let table = f.table.iter().map(|&b| 1 - b).collect();
    let name = if let Some(rest) = f.name.strip_prefix("f_") {
        format!("fbar_{rest}")
    } else {
        format!("not_{}", f.name)
    };
    OracleSpec::new(f.n, table, name).expect("same size")
}

/// XOR of two tables of the same arity: the function computed when two
/// parties each imprint their own phase pattern on the same pulse train.
pub fn compose_distributed(f: &OracleSpec, g: &OracleSpec) -> Result<OracleSpec> {
    if f.n != g.n {
        return Err(Error::OracleArity {
            oracle_n: g.n,
            setup_n: f.n,
        });
    }
    let table = f
        .table
        .iter()
        .zip(&g.table)
        .map(|(&a, &b)| a ^ b)
        .collect();
    OracleSpec::new(f.n, table, format!("{}^{}", f.name, g.name))
}

/// All linear oracles f_j in lexicographic j order, followed by their
/// complements in the same order: 2^{n+1} oracles total.
pub fn enumerate_bv_family(n: usize) -> Vec<OracleSpec> {
    let linear: Vec<OracleSpec> = BitString::all(n).map(|j| oracle_bv(&j)).collect();
    let complements: Vec<OracleSpec> = linear.iter().map(oracle_complement).collect();
    linear.into_iter().chain(complements).collect()
}

/// Parses the two-line truth-table format:
///
/// ```text
/// n=3
/// 01101001
/// ```
///
/// The second line lists f(x) for every x in lexicographic order. Blank lines
/// and lines starting with `#` are ignored.
pub fn parse_truth_table(text: &str) -> Result<OracleSpec> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines.next().ok_or(Error::TruthTableFormat {
        line: 1,
        reason: "empty input, expected `n=<int>`".into(),
    })?;
    let n: usize = header
        .strip_prefix("n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or(Error::TruthTableFormat {
            line: line_no,
            reason: format!("expected `n=<int>`, got `{header}`"),
        })?;

    let (row_line, row) = lines.next().ok_or(Error::TruthTableFormat {
        line: line_no + 1,
        reason: "missing truth-table row".into(),
    })?;
    if row.len() != 1 << n {
        return Err(Error::TruthTableFormat {
            line: row_line,
            reason: format!("expected {} characters, got {}", 1usize << n, row.len()),
        });
    }
    let table = row
        .chars()
        .map(|ch| match ch {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            other => Err(Error::TruthTableFormat {
                line: row_line,
                reason: format!("invalid character `{other}` in truth-table row"),
            }),
        })
        .collect::<Result<Vec<u8>>>()?;

    if let Some((extra_line, _)) = lines.next() {
        return Err(Error::TruthTableFormat {
            line: extra_line,
            reason: "unexpected content after truth-table row".into(),
        });
    }
    OracleSpec::new(n, table, "file")
}
