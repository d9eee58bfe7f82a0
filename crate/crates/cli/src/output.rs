//! CSV curves and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crossbif::continuation::Branch;
use crossbif::poincare::ScanRow;

use crate::CliError;

/// Shortest decimal that round-trips.
pub fn num(x: f64) -> String {
    ryu::Buffer::new().format(x).to_owned()
}

fn rows<I, const N: usize>(header: &str, it: I) -> String
where
    I: IntoIterator<Item = [f64; N]>,
{
    let mut s = String::from(header);
    s.push('\n');
    for r in it {
        let line: Vec<String> = r.iter().map(|&x| num(x)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

/// `eps,q,p,trace`; the trace column is `NaN` on untraced branches.
pub fn branch_csv(branch: &Branch) -> String {
    rows(
        "eps,q,p,trace",
        branch.samples.iter().enumerate().map(|(i, s)| {
            let tr = branch.trace.get(i).copied().unwrap_or(f64::NAN);
            [s.eps, s.q, s.p, tr]
        }),
    )
}

/// `eps,T,trace,phiT,psiT,dphiT,dpsiT`.
pub fn scan_csv(scan_rows: &[ScanRow]) -> String {
    rows(
        "eps,T,trace,phiT,psiT,dphiT,dpsiT",
        scan_rows.iter().map(|r| {
            let m = &r.monodromy;
            [r.eps, r.period, r.trace, m.phi_t, m.psi_t, m.dphi_t, m.dpsi_t]
        }),
    )
}

/// Write every file to a temporary sibling first and rename only once all
/// of them are on disk.
pub fn write_all_atomic(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>, CliError> {
    let io = |what: &str, p: &Path, e: std::io::Error| CliError::Io(format!("{what} {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io("creating", dir, e))?;
    let mut staged = Vec::new();
    for (name, contents) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
        let res = fs::File::create(&tmp).and_then(|mut f| {
            f.write_all(contents.as_bytes())?;
            f.sync_all()
        });
        if let Err(e) = res {
            let _ = fs::remove_file(&tmp);
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(io("writing", &tmp, e));
        }
        staged.push((tmp, target));
    }
    let mut done = Vec::new();
    for (tmp, target) in staged {
        fs::rename(&tmp, &target).map_err(|e| io("renaming", &tmp, e))?;
        done.push(target);
    }
    Ok(done)
}
