//! Plain CSV writers. `,` separator, `.` decimal point, `\n` line ends,
//! shortest round-trip formatting for floats.

use std::io::{self, Write};

use crate::montecarlo::SampleRow;
use crate::oracle::{ExactDistribution, RationalDistribution};
use crate::urn::Trajectory;

/// `n,R,B,T,y,column`; row `n = 0` is the initial state with empty `y` and
/// `column`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "n,R,B,T,y,column")?;
    for (i, s) in traj.states.iter().enumerate() {
        match i.checked_sub(1).map(|j| traj.steps[j]) {
            None => writeln!(out, "{},{},{},{},,", s.n, s.r, s.b, s.t)?,
            Some(step) => writeln!(
                out,
                "{},{},{},{},{},{}",
                s.n,
                s.r,
                s.b,
                s.t,
                u8::from(step.y),
                step.column
            )?,
        }
    }
    Ok(())
}

/// `k,R,prob`.
pub fn write_exact_csv<W: Write>(dist: &ExactDistribution, mut out: W) -> io::Result<()> {
    writeln!(out, "k,R,prob")?;
    for (k, (r, q)) in dist.support.iter().zip(&dist.probs).enumerate() {
        writeln!(out, "{k},{r},{q:?}")?;
    }
    Ok(())
}

/// `k,R,prob` with `prob` written as `num/den`.
pub fn write_rational_csv<W: Write>(dist: &RationalDistribution, mut out: W) -> io::Result<()> {
    writeln!(out, "k,R,prob")?;
    for (k, (r, q)) in dist.support.iter().zip(&dist.probs).enumerate() {
        writeln!(out, "{k},{r},{q}")?;
    }
    Ok(())
}

/// `replicate,m,R_fluct_scaled`.
pub fn write_samples_csv<W: Write>(rows: &[SampleRow], mut out: W) -> io::Result<()> {
    writeln!(out, "replicate,m,R_fluct_scaled")?;
    for row in rows {
        writeln!(out, "{},{},{:?}", row.replicate, row.m, row.value)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::Preset;
    use crate::oracle::exact_distribution;
    use crate::urn::simulate;

    #[test]
    fn trajectory_rows() {
        let model = Preset::Krw.model(0.5, 0.5).unwrap();
        let traj = simulate(&model, 5, 1);
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0,1,1,2,,");
        assert_eq!(lines[2].split(',').count(), 6);
    }

    #[test]
    fn exact_rows() {
        let model = Preset::Krw.model(0.5, 0.0).unwrap();
        let mut buf = Vec::new();
        write_exact_csv(&exact_distribution(&model, 2).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,R,prob\n0,3,0.25\n1,4,0.5\n2,5,0.25\n");
    }
}
