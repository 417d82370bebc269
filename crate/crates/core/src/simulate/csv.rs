use std::io::{self, Write};

use super::Trajectory;

/// Writes one row per recorded step. Columns: `t`, `q1..`, `pI_1..`,
/// `xi_1..` (frame runs only), `H`, `constraint_residual`,
/// `dalembert_residual`, `u_1..`. Floats use the shortest representation
/// that round-trips.
pub fn write_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    let dim = traj.n_free + traj.n_control;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("q{i}")));
    header.extend((1..=dim).map(|i| format!("pI_{i}")));
    if let Some(xi) = &traj.xi {
        let n = xi.first().map_or(0, |x| x.len());
        header.extend((1..=n).map(|i| format!("xi_{i}")));
    }
    header.extend(["H", "constraint_residual", "dalembert_residual"].map(String::from));
    header.extend((1..=traj.n_control).map(|i| format!("u_{i}")));
    writeln!(w, "{}", header.join(","))?;

    let mut fields: Vec<f64> = Vec::with_capacity(header.len());
    for i in 0..traj.len() {
        fields.clear();
        fields.push(traj.times[i]);
        fields.extend(traj.q[i].iter());
        fields.extend(traj.p_i[i].iter());
        if let Some(xi) = &traj.xi {
            fields.extend(xi[i].iter());
        }
        fields.push(traj.hamiltonian[i]);
        fields.push(traj.constraint_residual[i]);
        fields.push(traj.dalembert_residual[i]);
        fields.extend(traj.control[i].iter());
        let line: Vec<String> = fields.iter().map(|x| format!("{x:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}
