//! File formats: text and binary genotype panels, SNP sidecars, the GRM
//! binary pair (`.grm.bin` + `.grm.id`), pedigrees, phenotypes, treelet
//! rotations and the CSV reports.
//!
//! Text readers skip lines starting with `#` (except the `#ids` header of a
//! genotype file), so every writer may prefix its output with a comment block.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::eval::{RmseRow, ZeroRow};
use crate::genotype::{GenotypePanel, SnpMeta, MISSING};
use crate::grm::{MatrixKind, Pedigree, PedigreeMember, RelationshipMatrix};
use crate::reml::{PhenotypeVector, ProfilePoint, VarianceComponents};
use crate::scalar::Real;
use crate::treelet::{Rotation, Similarity, TreeletDecomposition};
use crate::tuning::TuningResult;

const GENOTYPE_MAGIC: &[u8; 8] = b"TCSKGT01";

/// Genotype file flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenotypeFormat {
    Text,
    Binary,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `lines` as `# `-prefixed comments.
pub fn write_comments(w: &mut impl Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || (t.starts_with('#') && !t.starts_with("#ids")) {
            continue;
        }
        out.push((k + 1, line));
    }
    Ok(out)
}

/// `<path>` with `suffix` appended to the file name.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a genotype panel. Text panels take SNP metadata from `snps` when
/// given, else from `<path>.snps` if it exists, else generate ids `snp1..`
/// on chromosome 1 at positions `1..`.
pub fn load_genotypes(path: &Path, format: GenotypeFormat, snps: Option<&Path>) -> Result<GenotypePanel> {
    match format {
        GenotypeFormat::Binary => read_genotypes_binary(path),
        GenotypeFormat::Text => {
            let panel = read_genotypes_text(path)?;
            let sidecar = snps
                .map(Path::to_path_buf)
                .unwrap_or_else(|| with_suffix(path, ".snps"));
            if sidecar.exists() {
                let meta = read_snp_meta(&sidecar)?;
                panel.with_snps(meta)
            } else if let Some(p) = snps {
                Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} not found", p.display()),
                )))
            } else {
                Ok(panel)
            }
        }
    }
}

/// Guesses the format from the file's first bytes.
pub fn detect_genotype_format(path: &Path) -> Result<GenotypeFormat> {
    let mut head = [0u8; 8];
    let mut f = File::open(path)?;
    let n = f.read(&mut head)?;
    Ok(if n == 8 && &head == GENOTYPE_MAGIC {
        GenotypeFormat::Binary
    } else {
        GenotypeFormat::Text
    })
}

/// Text genotypes: optional `#ids` line, then one sample per row with entries
/// from `{0, 1, 2, NA}`.
pub fn read_genotypes_text(path: &Path) -> Result<GenotypePanel> {
    let lines = data_lines(path)?;
    let mut ids: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
    let mut width: Option<usize> = None;
    for (line_no, line) in &lines {
        let line_no = *line_no;
        if let Some(rest) = line.trim().strip_prefix("#ids") {
            if ids.is_some() || !rows.is_empty() {
                return Err(parse_err(
                    path,
                    line_no,
                    "#ids header must come before the genotype rows",
                ));
            }
            ids = Some(rest.split_whitespace().map(str::to_string).collect());
            continue;
        }
        let row_idx = rows.len();
        let mut row = Vec::new();
        for (col, tok) in line.split_whitespace().enumerate() {
            row.push(match tok {
                "0" => Some(0),
                "1" => Some(1),
                "2" => Some(2),
                "NA" => None,
                other => {
                    return Err(Error::GenotypeDomain {
                        row: row_idx + 1,
                        col: col + 1,
                        value: other.to_string(),
                    })
                }
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected {w} genotypes, found {}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, lines.last().map_or(0, |l| l.0), "no samples"));
    }
    let ids = match ids {
        Some(ids) if ids.len() != rows.len() => {
            return Err(parse_err(
                path,
                0,
                format!("#ids lists {} samples but {} rows follow", ids.len(), rows.len()),
            ))
        }
        Some(ids) => ids,
        None => (1..=rows.len()).map(|i| format!("S{i}")).collect(),
    };
    let m = width.unwrap_or(0);
    let snps = (1..=m).map(|k| SnpMeta::new(format!("snp{k}"), 1, k as u64)).collect();
    GenotypePanel::from_rows(ids, snps, &rows)
}

pub fn write_genotypes_text(path: &Path, panel: &GenotypePanel, header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "#ids {}", panel.sample_ids().join(" "))?;
    let mut line = String::with_capacity(2 * panel.n_snps());
    for i in 0..panel.n_samples() {
        line.clear();
        for k in 0..panel.n_snps() {
            if k > 0 {
                line.push(' ');
            }
            match panel.get(i, k) {
                MISSING => line.push_str("NA"),
                v => line.push(char::from(b'0' + v)),
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// SNP sidecar: `id chrom pos` per line.
pub fn read_snp_meta(path: &Path) -> Result<Vec<SnpMeta>> {
    data_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(path, line_no, "expected `id chrom pos`"));
            }
            let chrom = f[1]
                .parse::<u32>()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| parse_err(path, line_no, format!("bad chromosome {:?}", f[1])))?;
            let pos = f[2]
                .parse::<u64>()
                .map_err(|_| parse_err(path, line_no, format!("bad position {:?}", f[2])))?;
            Ok(SnpMeta::new(f[0], chrom, pos))
        })
        .collect()
}

pub fn write_snp_meta(path: &Path, snps: &[SnpMeta], header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    for s in snps {
        writeln!(w, "{} {} {}", s.id, s.chromosome, s.position)?;
    }
    w.flush()?;
    Ok(())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated binary genotype file: {e}")))?;
    Ok(b)
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = u32::from_le_bytes(read_exact::<4>(r)?) as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated binary genotype file: {e}")))?;
    String::from_utf8(buf).map_err(|_| Error::Format("identifier is not UTF-8".into()))
}

/// Binary genotypes: magic `TCSKGT01`, `N` and `m` as u64 LE, `N` sample ids,
/// `m` SNP records (id, u32 chromosome, u64 position), then the counts
/// SNP-major as one byte each (255 = missing). Strings are u32 length + UTF-8.
pub fn write_genotypes_binary(path: &Path, panel: &GenotypePanel) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(GENOTYPE_MAGIC)?;
    w.write_all(&(panel.n_samples() as u64).to_le_bytes())?;
    w.write_all(&(panel.n_snps() as u64).to_le_bytes())?;
    for id in panel.sample_ids() {
        write_str(&mut w, id)?;
    }
    for s in panel.snps() {
        write_str(&mut w, &s.id)?;
        w.write_all(&s.chromosome.to_le_bytes())?;
        w.write_all(&s.position.to_le_bytes())?;
    }
    for k in 0..panel.n_snps() {
        w.write_all(panel.column(k))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_genotypes_binary(path: &Path) -> Result<GenotypePanel> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_exact::<8>(&mut r)? != GENOTYPE_MAGIC {
        return Err(Error::Format(format!("{}: not a binary genotype file", path.display())));
    }
    let n = u64::from_le_bytes(read_exact::<8>(&mut r)?) as usize;
    let m = u64::from_le_bytes(read_exact::<8>(&mut r)?) as usize;
    let ids = (0..n).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
    let mut snps = Vec::with_capacity(m);
    for _ in 0..m {
        let id = read_str(&mut r)?;
        let chrom = u32::from_le_bytes(read_exact::<4>(&mut r)?);
        let pos = u64::from_le_bytes(read_exact::<8>(&mut r)?);
        snps.push(SnpMeta::new(id, chrom, pos));
    }
    let mut counts = vec![0u8; n * m];
    r.read_exact(&mut counts)
        .map_err(|e| Error::Format(format!("truncated binary genotype file: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes in binary genotype file",
            rest.len()
        )));
    }
    GenotypePanel::new(ids, snps, counts)
}

/// `(<stem>.grm.bin, <stem>.grm.id)`.
pub fn grm_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (with_suffix(stem, ".grm.bin"), with_suffix(stem, ".grm.id"))
}

/// Writes the lower triangle (diagonal included, row by row) as f32 LE to
/// `<stem>.grm.bin` and the ids, one per line, to `<stem>.grm.id`.
pub fn write_grm<T: Real>(stem: &Path, a: &RelationshipMatrix<T>) -> Result<()> {
    let (bin, id) = grm_paths(stem);
    let mut w = create(&bin)?;
    for i in 0..a.n() {
        for j in 0..=i {
            w.write_all(&(a.get(i, j).as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut w = create(&id)?;
    for s in a.sample_ids() {
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_grm`].
pub fn read_grm<T: Real>(stem: &Path, kind: MatrixKind) -> Result<RelationshipMatrix<T>> {
    let (bin, id) = grm_paths(stem);
    let ids: Vec<String> = BufReader::new(File::open(&id)?)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    let mut bytes = Vec::new();
    File::open(&bin)?.read_to_end(&mut bytes)?;
    let n = ids.len();
    let expected = n * (n + 1) / 2;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::Format(format!(
            "{}: {} bytes do not hold the {expected}-entry lower triangle for {n} ids",
            bin.display(),
            bytes.len()
        )));
    }
    let mut values = DMatrix::zeros(n, n);
    let mut chunks = bytes.chunks_exact(4);
    for i in 0..n {
        for j in 0..=i {
            let c = chunks.next().expect("length checked");
            let v = T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    RelationshipMatrix::new(values, ids, kind)
}

/// Pedigree file: `id father mother`, `0` for an unknown parent.
pub fn read_pedigree(path: &Path) -> Result<Pedigree> {
    let members = data_lines(path)?
        .into_iter()
        .map(|(line_no, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(path, line_no, "expected `id father mother`"));
            }
            let parent = |s: &str| (s != "0").then(|| s.to_string());
            Ok(PedigreeMember {
                id: f[0].to_string(),
                father: parent(f[1]),
                mother: parent(f[2]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Pedigree::new(members)
}

pub fn write_pedigree(path: &Path, ped: &Pedigree, header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    for m in ped.members() {
        writeln!(
            w,
            "{} {} {}",
            m.id,
            m.father.as_deref().unwrap_or("0"),
            m.mother.as_deref().unwrap_or("0")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Phenotype file: `id value` per line; a first line whose value does not
/// parse as a number is taken as a header.
pub fn read_phenotype<T: Real>(path: &Path) -> Result<PhenotypeVector<T>> {
    let lines = data_lines(path)?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (k, (line_no, line)) in lines.iter().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 2 {
            return Err(parse_err(path, *line_no, "expected `id value`"));
        }
        match f[1].parse::<f64>() {
            Ok(v) => {
                ids.push(f[0].to_string());
                values.push(T::lit(v));
            }
            Err(_) if k == 0 => continue,
            Err(_) => return Err(parse_err(path, *line_no, format!("bad phenotype value {:?}", f[1]))),
        }
    }
    if ids.is_empty() {
        return Err(parse_err(path, 0, "no phenotype values"));
    }
    PhenotypeVector::new(values, ids)
}

pub fn write_phenotype<T: Real>(path: &Path, y: &PhenotypeVector<T>, header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "id value")?;
    for (id, v) in y.sample_ids.iter().zip(y.values.iter()) {
        writeln!(w, "{id} {}", v.as_f64())?;
    }
    w.flush()?;
    Ok(())
}

pub const TREELET_HEADER: &str = "level,i,j,cos,sin,retained,retired";

/// Treelet rotations as CSV; the similarity is recorded in a comment.
pub fn write_treelet<T: Real>(path: &Path, decomp: &TreeletDecomposition<T>, header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "# similarity={}", decomp.similarity().as_str())?;
    writeln!(w, "# n={}", decomp.n())?;
    writeln!(w, "{TREELET_HEADER}")?;
    for r in decomp.rotations() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.level,
            r.i,
            r.j,
            r.cos.as_f64(),
            r.sin.as_f64(),
            r.retained,
            r.retired
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rotations written by [`write_treelet`]; rebuild the decomposition
/// with [`TreeletDecomposition::from_rotations`].
pub fn read_treelet<T: Real>(path: &Path) -> Result<(Vec<Rotation<T>>, Similarity)> {
    let reader = BufReader::new(File::open(path)?);
    let mut similarity = Similarity::Correlation;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            if let Some(s) = c.trim().strip_prefix("similarity=") {
                similarity = Similarity::parse(s)?;
            }
            continue;
        }
        if t.is_empty() {
            continue;
        }
        if !seen_header {
            if t != TREELET_HEADER {
                return Err(parse_err(path, k + 1, format!("expected header `{TREELET_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(path, k + 1, "expected 7 fields"));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, k + 1, format!("bad integer {s:?}")))
        };
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(path, k + 1, format!("bad number {s:?}")))
        };
        rows.push(Rotation {
            level: int(f[0])?,
            i: int(f[1])?,
            j: int(f[2])?,
            cos: T::lit(real(f[3])?),
            sin: T::lit(real(f[4])?),
            retained: int(f[5])?,
            retired: int(f[6])?,
        });
    }
    if !seen_header {
        return Err(parse_err(path, 0, "missing header"));
    }
    Ok((rows, similarity))
}

pub const TUNING_HEADER: &str = "lambda,H";

pub fn write_tuning_csv<T: Real>(path: &Path, result: &TuningResult<T>, header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "# lambda_hat={}", result.lambda_hat.as_f64())?;
    let ws = result.weights_summary;
    writeln!(
        w,
        "# weights mean={} max={} nonzero_fraction={}",
        ws.mean, ws.max, ws.nonzero_fraction
    )?;
    writeln!(w, "{TUNING_HEADER}")?;
    for (l, h) in &result.risk_curve {
        writeln!(w, "{},{}", l.as_f64(), h.as_f64())?;
    }
    w.flush()?;
    Ok(())
}

pub const FIT_HEADER: &str = "lambda,neg2loglik,h2,sigma_g2,sigma_e2,converged";

fn fit_row<T: Real>(lambda: Option<T>, f: &VarianceComponents<T>) -> String {
    format!(
        "{},{},{},{},{},{}",
        lambda.map_or("NA".to_string(), |l| l.as_f64().to_string()),
        -2.0 * f.reml_loglik.as_f64(),
        f.h2.as_f64(),
        f.sigma_g2.as_f64(),
        f.sigma_e2.as_f64(),
        f.converged
    )
}

/// Single REML fit; `lambda` is `NA` for an unsmoothed matrix.
pub fn write_fit_csv<T: Real>(
    path: &Path,
    lambda: Option<T>,
    fit: &VarianceComponents<T>,
    header: &[String],
) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "# mu_hat={}", fit.mu_hat.as_f64())?;
    writeln!(w, "{FIT_HEADER}")?;
    writeln!(w, "{}", fit_row(lambda, fit))?;
    w.flush()?;
    Ok(())
}

/// Profile-likelihood curve; failed grid points are written with `NA`
/// values and `converged` false.
pub fn write_profile_csv<T: Real>(
    path: &Path,
    curve: &[ProfilePoint<T>],
    lambda_star: T,
    header: &[String],
) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "# lambda_star={}", lambda_star.as_f64())?;
    writeln!(w, "{FIT_HEADER}")?;
    for p in curve {
        match &p.fit {
            Ok(f) => writeln!(w, "{}", fit_row(Some(p.lambda), f))?,
            Err(_) => writeln!(w, "{},NA,NA,NA,NA,false", p.lambda.as_f64())?,
        }
    }
    w.flush()?;
    Ok(())
}

pub const RMSE_HEADER: &str = "degree_bin,method,rmse,pairs";
pub const ZERO_HEADER: &str = "degree_bin,method,zero_fraction";

pub fn write_rmse_csv(path: &Path, rows: &[RmseRow], header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "{RMSE_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.bin, r.method, r.rmse, r.pairs)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_zero_csv(path: &Path, rows: &[ZeroRow], header: &[String]) -> Result<()> {
    let mut w = create(path)?;
    write_comments(&mut w, header)?;
    writeln!(w, "{ZERO_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{}", r.bin, r.method, r.zero_fraction)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed CSV file: comment lines dropped, header split, every row checked
/// to have as many fields as the header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut comments = Vec::new();
        let mut header: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            match &header {
                None => header = Some(fields),
                Some(h) if h.len() != fields.len() => {
                    return Err(parse_err(
                        path,
                        k + 1,
                        format!("{} fields, header has {}", fields.len(), h.len()),
                    ))
                }
                Some(_) => rows.push(fields),
            }
        }
        let header = header.ok_or_else(|| parse_err(path, 0, "missing header"))?;
        Ok(Self { comments, header, rows })
    }

    /// Fails unless the header is exactly `expected` (comma-separated).
    pub fn expect_header(&self, expected: &str) -> Result<()> {
        if self.header.join(",") == expected {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "header `{}` differs from `{expected}`",
                self.header.join(",")
            )))
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of a numeric column; `NA` becomes NaN.
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::Format(format!("no column {name}")))?;
        self.rows
            .iter()
            .map(|r| match r[c].as_str() {
                "NA" => Ok(f64::NAN),
                s => s
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("column {name}: bad number {s:?}"))),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_genotypes_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "0 1 2\n2 1 0\n").unwrap();
        let panel = read_genotypes_text(&p).unwrap();
        assert_eq!(panel.row(0), vec![Some(0), Some(1), Some(2)]);
        assert_eq!(panel.row(1), vec![Some(2), Some(1), Some(0)]);
        assert_eq!(panel.sample_ids(), ["S1", "S2"]);
    }

    #[test]
    fn text_genotype_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.txt");
        std::fs::write(&p, "0 1\n1 3\n").unwrap();
        assert!(matches!(
            read_genotypes_text(&p),
            Err(Error::GenotypeDomain { row: 2, col: 2, .. })
        ));
        std::fs::write(&p, "").unwrap();
        let e = read_genotypes_text(&p).unwrap_err();
        assert!(e.to_string().contains("no samples"));
        std::fs::write(&p, "0 1\n1\n").unwrap();
        assert!(matches!(read_genotypes_text(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn grm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("s");
        let a = RelationshipMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]),
            vec!["a".into(), "b".into()],
            MatrixKind::RawEstimate,
        )
        .unwrap();
        write_grm(&stem, &a).unwrap();
        let bytes = std::fs::read(grm_paths(&stem).0).unwrap();
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        assert_eq!(floats, vec![1.0, 0.25, 1.0]);
        let back: RelationshipMatrix<f64> = read_grm(&stem, MatrixKind::RawEstimate).unwrap();
        assert_eq!(back.values(), a.values());
    }

    #[test]
    fn grm_truncated_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("s");
        let (bin, id) = grm_paths(&stem);
        std::fs::write(&id, "a\nb\nc\n").unwrap();
        std::fs::write(&bin, vec![0u8; 5 * 4]).unwrap();
        assert!(matches!(
            read_grm::<f64>(&stem, MatrixKind::RawEstimate),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn pedigree_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ped.txt");
        std::fs::write(&p, "# family\na 0 0\nb 0 0\nc a b\n").unwrap();
        let ped = read_pedigree(&p).unwrap();
        assert_eq!(ped.parents(2), Some((0, 1)));
        let q = dir.path().join("ped2.txt");
        write_pedigree(&q, &ped, &["x".into()]).unwrap();
        assert_eq!(read_pedigree(&q).unwrap().members(), ped.members());
    }

    #[test]
    fn phenotype_header_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.txt");
        std::fs::write(&p, "id value\na 1.5\nb -2\n").unwrap();
        let y: PhenotypeVector<f64> = read_phenotype(&p).unwrap();
        assert_eq!(y.values.as_slice(), &[1.5, -2.0]);
        std::fs::write(&p, "a 1.5\nb x\n").unwrap();
        assert!(read_phenotype::<f64>(&p).is_err());
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "# c\nlambda,H\n0,1\n0.1\n").unwrap();
        assert!(CsvTable::read(&p).is_err());
        std::fs::write(&p, "# c\nlambda,H\n0,1\n0.1,NA\n").unwrap();
        let t = CsvTable::read(&p).unwrap();
        t.expect_header(TUNING_HEADER).unwrap();
        assert!(t.f64_column("H").unwrap()[1].is_nan());
    }
}
