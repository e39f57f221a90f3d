//! Passive n x m crossbar: cell states/parameters, wire parasitics, pulse
//! application and nodal-analysis reads.
//!
//! Every cell bridges a row wire and a column wire. Wires are chains of
//! per-segment resistances; drivers attach at the left end of each row and
//! the virtual-ground sense amplifiers at the bottom of each column. Solving
//! the full wire-node system makes sneak-path currents emerge naturally.

use crate::device::{DeviceModel, DeviceParams, DeviceState, PulseLibrary, PulseSpec};
use crate::error::{Error, Result};
use crate::variation::VariationSpec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// How one row line is driven during a read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowDrive {
    Voltage(f64),
    Floating,
}

/// How one column line is terminated during a read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColDrive {
    VirtualGround,
    Floating,
}

/// Per-line drive assignment for a read.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveVector {
    pub rows: Vec<RowDrive>,
    pub cols: Vec<ColDrive>,
}

impl DriveVector {
    /// All rows driven at the given voltages, all columns at virtual ground.
    pub fn full_read(row_voltages: &[f64], cols: usize) -> Self {
        Self {
            rows: row_voltages.iter().map(|&v| RowDrive::Voltage(v)).collect(),
            cols: vec![ColDrive::VirtualGround; cols],
        }
    }

    /// A single row driven, all others floating, all columns sensed.
    pub fn single_row(row: usize, voltage: f64, rows: usize, cols: usize) -> Self {
        let mut r = vec![RowDrive::Floating; rows];
        r[row] = RowDrive::Voltage(voltage);
        Self {
            rows: r,
            cols: vec![ColDrive::VirtualGround; cols],
        }
    }

    fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows.len() != rows || self.cols.len() != cols {
            return Err(Error::Domain(format!(
                "drive vector is {}x{}, crossbar is {rows}x{cols}",
                self.rows.len(),
                self.cols.len()
            )));
        }
        let driven = self.rows.iter().any(|d| matches!(d, RowDrive::Voltage(_)));
        let grounded = self.cols.iter().any(|d| matches!(d, ColDrive::VirtualGround));
        if !driven || !grounded {
            return Err(Error::Config(
                "a read needs at least one driven row and one virtual-ground column".into(),
            ));
        }
        Ok(())
    }
}

/// Solved node voltages and line currents for one read.
#[derive(Debug, Clone)]
pub struct ReadResult {
    /// Current into each column's virtual-ground sense node (A); zero for
    /// floating columns.
    pub column_currents: Vec<f64>,
    /// Current injected by each driven row (A); zero for floating rows.
    pub row_currents: Vec<f64>,
    /// Row-wire node voltages, row-major n*m (V).
    pub row_node_v: Vec<f64>,
    /// Column-wire node voltages, row-major n*m (V).
    pub col_node_v: Vec<f64>,
}

/// A dense matrix of bits, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, bit: u8) {
        self.bits[r * self.cols + c] = if bit == 0 { 0 } else { 1 };
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn ones_in_row(&self, r: usize) -> usize {
        self.bits[r * self.cols..(r + 1) * self.cols]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }

    pub fn as_bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != rows * cols || bits.iter().any(|&b| b > 1) {
            return Err(Error::Domain("bit matrix shape/content mismatch".into()));
        }
        Ok(Self { rows, cols, bits })
    }

    /// CSV dump: one row per line, '0'/'1' fields.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<&str> = (0..self.cols)
                .map(|c| if self.get(r, c) == 1 { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// One cell: binary state plus its variation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub state: DeviceState,
    pub params: DeviceParams,
}

/// The central mutable simulation object.
#[derive(Debug, Clone)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    r_wire_ohms: f64,
    model: DeviceModel,
    variation: VariationSpec,
    rng: ChaCha12Rng,
}

const MAX_PROGRAM_ATTEMPTS: usize = 64;

impl Crossbar {
    /// Build a crossbar with fresh device-to-device parameter draws; all
    /// cells start in HRS.
    pub fn sample(
        rows: usize,
        cols: usize,
        model: DeviceModel,
        variation: VariationSpec,
        r_wire_ohms: f64,
        seed: u64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("crossbar dimensions must be at least 1x1".into()));
        }
        if !(r_wire_ohms >= 0.0) || !r_wire_ohms.is_finite() {
            return Err(Error::Domain(format!(
                "wire resistance must be non-negative, got {r_wire_ohms}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let cells = (0..rows * cols)
            .map(|_| Cell {
                state: DeviceState::Hrs,
                params: variation.sample_d2d(&mut rng),
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            cells,
            r_wire_ohms,
            model,
            variation,
            rng,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn model(&self) -> &DeviceModel {
        &self.model
    }
    pub fn r_wire_ohms(&self) -> f64 {
        self.r_wire_ohms
    }

    pub fn cell(&self, r: usize, c: usize) -> &Cell {
        &self.cells[r * self.cols + c]
    }

    /// Replace one cell outright (test and enrollment tooling).
    pub fn set_cell(&mut self, r: usize, c: usize, state: DeviceState, params: DeviceParams) {
        self.cells[r * self.cols + c] = Cell { state, params };
    }

    pub fn set_state(&mut self, r: usize, c: usize, state: DeviceState) {
        self.cells[r * self.cols + c].state = state;
    }

    /// The state bitmap (LRS -> 1), read non-destructively by thresholding
    /// each cell's current resistance at the HRS/LRS decision boundary.
    pub fn read_states(&self) -> BitMatrix {
        let threshold = self.model.read_threshold_ohms();
        let mut out = BitMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = self.cell(r, c);
                let res = self.model.resistance(&cell.params, cell.state);
                out.set(r, c, if res < threshold { 1 } else { 0 });
            }
        }
        out
    }

    fn conductance(&self, r: usize, c: usize) -> f64 {
        let cell = self.cell(r, c);
        1.0 / self.model.resistance(&cell.params, cell.state)
    }

    /// Device current of cell (r, c) implied by a solved read.
    pub fn device_current(&self, result: &ReadResult, r: usize, c: usize) -> f64 {
        let idx = r * self.cols + c;
        self.conductance(r, c) * (result.row_node_v[idx] - result.col_node_v[idx])
    }

    /// Solve all node voltages and line currents for a drive pattern.
    pub fn solve(&self, drive: &DriveVector) -> Result<ReadResult> {
        drive.validate(self.rows, self.cols)?;
        if self.r_wire_ohms == 0.0 {
            self.solve_ideal(drive)
        } else {
            self.solve_wired(drive)
        }
    }

    /// Ideal wires: each line is a single node.
    fn solve_ideal(&self, drive: &DriveVector) -> Result<ReadResult> {
        let (n, m) = (self.rows, self.cols);
        // Unknowns: floating rows then floating columns.
        let mut unknown_of_row = vec![usize::MAX; n];
        let mut unknown_of_col = vec![usize::MAX; m];
        let mut unknowns = 0usize;
        for (i, d) in drive.rows.iter().enumerate() {
            if matches!(d, RowDrive::Floating) {
                unknown_of_row[i] = unknowns;
                unknowns += 1;
            }
        }
        for (j, d) in drive.cols.iter().enumerate() {
            if matches!(d, ColDrive::Floating) {
                unknown_of_col[j] = unknowns;
                unknowns += 1;
            }
        }

        let mut row_v = vec![0.0f64; n];
        let mut col_v = vec![0.0f64; m];
        for (i, d) in drive.rows.iter().enumerate() {
            if let RowDrive::Voltage(v) = d {
                row_v[i] = *v;
            }
        }

        if unknowns > 0 {
            let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
            let mut b = DVector::<f64>::zeros(unknowns);
            for i in 0..n {
                for j in 0..m {
                    let g = self.conductance(i, j);
                    let ur = unknown_of_row[i];
                    let uc = unknown_of_col[j];
                    match (ur != usize::MAX, uc != usize::MAX) {
                        (true, true) => {
                            a[(ur, ur)] += g;
                            a[(uc, uc)] += g;
                            a[(ur, uc)] -= g;
                            a[(uc, ur)] -= g;
                        }
                        (true, false) => {
                            a[(ur, ur)] += g;
                            // column at virtual ground: contributes 0 to b
                        }
                        (false, true) => {
                            a[(uc, uc)] += g;
                            b[uc] += g * row_v[i];
                        }
                        (false, false) => {}
                    }
                }
            }
            let solution = a
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Singular("ideal-wire node system".into()))?;
            for i in 0..n {
                if unknown_of_row[i] != usize::MAX {
                    row_v[i] = solution[unknown_of_row[i]];
                }
            }
            for j in 0..m {
                if unknown_of_col[j] != usize::MAX {
                    col_v[j] = solution[unknown_of_col[j]];
                }
            }
        }

        let mut column_currents = vec![0.0f64; m];
        let mut row_currents = vec![0.0f64; n];
        for j in 0..m {
            if matches!(drive.cols[j], ColDrive::VirtualGround) {
                column_currents[j] = (0..n)
                    .map(|i| self.conductance(i, j) * (row_v[i] - col_v[j]))
                    .sum();
            }
        }
        for i in 0..n {
            if matches!(drive.rows[i], RowDrive::Voltage(_)) {
                row_currents[i] = (0..m)
                    .map(|j| self.conductance(i, j) * (row_v[i] - col_v[j]))
                    .sum();
            }
        }

        let mut row_node_v = vec![0.0; n * m];
        let mut col_node_v = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                row_node_v[i * m + j] = row_v[i];
                col_node_v[i * m + j] = col_v[j];
            }
        }
        Ok(ReadResult {
            column_currents,
            row_currents,
            row_node_v,
            col_node_v,
        })
    }

    /// Resistive wires: one row-wire and one column-wire node per cell,
    /// chained by per-segment conductances. Drivers and virtual grounds
    /// attach through one wire segment each.
    fn solve_wired(&self, drive: &DriveVector) -> Result<ReadResult> {
        let (n, m) = (self.rows, self.cols);
        let g_w = 1.0 / self.r_wire_ohms;
        let size = 2 * n * m;
        let row_idx = |i: usize, j: usize| i * m + j;
        let col_idx = |i: usize, j: usize| n * m + i * m + j;

        let mut a = DMatrix::<f64>::zeros(size, size);
        let mut b = DVector::<f64>::zeros(size);
        let mut stamp = |a: &mut DMatrix<f64>, p: usize, q: usize, g: f64| {
            a[(p, p)] += g;
            a[(q, q)] += g;
            a[(p, q)] -= g;
            a[(q, p)] -= g;
        };

        for i in 0..n {
            for j in 0..m.saturating_sub(1) {
                stamp(&mut a, row_idx(i, j), row_idx(i, j + 1), g_w);
            }
        }
        for j in 0..m {
            for i in 0..n.saturating_sub(1) {
                stamp(&mut a, col_idx(i, j), col_idx(i + 1, j), g_w);
            }
        }
        for i in 0..n {
            for j in 0..m {
                stamp(&mut a, row_idx(i, j), col_idx(i, j), self.conductance(i, j));
            }
        }
        for (i, d) in drive.rows.iter().enumerate() {
            if let RowDrive::Voltage(v) = d {
                let p = row_idx(i, 0);
                a[(p, p)] += g_w;
                b[p] += g_w * v;
            }
        }
        for (j, d) in drive.cols.iter().enumerate() {
            if matches!(d, ColDrive::VirtualGround) {
                let p = col_idx(n - 1, j);
                a[(p, p)] += g_w;
            }
        }

        let solution = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Singular("wire node system".into()))?;

        let mut column_currents = vec![0.0f64; m];
        for (j, d) in drive.cols.iter().enumerate() {
            if matches!(d, ColDrive::VirtualGround) {
                column_currents[j] = g_w * solution[col_idx(n - 1, j)];
            }
        }
        let mut row_currents = vec![0.0f64; n];
        for (i, d) in drive.rows.iter().enumerate() {
            if let RowDrive::Voltage(v) = d {
                row_currents[i] = g_w * (v - solution[row_idx(i, 0)]);
            }
        }
        let row_node_v = (0..n * m).map(|k| solution[k]).collect();
        let col_node_v = (0..n * m).map(|k| solution[n * m + k]).collect();
        Ok(ReadResult {
            column_currents,
            row_currents,
            row_node_v,
            col_node_v,
        })
    }

    /// Apply one pulse to a single cell; programming-amplitude pulses also
    /// advance the cell's cycle-to-cycle parameter walk.
    pub fn pulse_cell(&mut self, r: usize, c: usize, pulse: &PulseSpec) -> Result<()> {
        if r >= self.rows || c >= self.cols {
            return Err(Error::Domain(format!("cell ({r}, {c}) out of bounds")));
        }
        let idx = r * self.cols + c;
        let cell = self.cells[idx];
        let next = self
            .model
            .apply_pulse(cell.state, &cell.params, pulse, &mut self.rng);
        self.cells[idx].state = next;
        if pulse.amplitude_v.abs() > self.model.read_max_v {
            self.cells[idx].params = self.variation.c2c_step(&cell.params, &mut self.rng);
        }
        Ok(())
    }

    /// Apply one pulse to every cell on the selected rows (each cell sees the
    /// full amplitude; programming sources are per-device).
    pub fn pulse_rows(&mut self, rows: &[usize], pulse: &PulseSpec) -> Result<()> {
        let mut selected: Vec<usize> = rows.to_vec();
        selected.sort_unstable();
        selected.dedup();
        if let Some(&bad) = selected.iter().find(|&&r| r >= self.rows) {
            return Err(Error::Domain(format!("row {bad} out of bounds")));
        }
        for r in selected {
            for c in 0..self.cols {
                self.pulse_cell(r, c, pulse)?;
            }
        }
        Ok(())
    }

    pub fn pulse_all(&mut self, pulse: &PulseSpec) -> Result<()> {
        let all: Vec<usize> = (0..self.rows).collect();
        self.pulse_rows(&all, pulse)
    }

    /// Program one cell to a target state with a verify-retry loop.
    pub fn program_cell(
        &mut self,
        r: usize,
        c: usize,
        target: DeviceState,
        pulses: &PulseLibrary,
    ) -> Result<()> {
        let pulse = match target {
            DeviceState::Lrs => pulses.program_set,
            DeviceState::Hrs => pulses.program_reset,
        };
        for _ in 0..MAX_PROGRAM_ATTEMPTS {
            if self.cell(r, c).state == target {
                return Ok(());
            }
            self.pulse_cell(r, c, &pulse)?;
        }
        Err(Error::State(format!(
            "cell ({r}, {c}) failed to program after {MAX_PROGRAM_ATTEMPTS} attempts"
        )))
    }

    /// Program the whole array to one state (form/erase) with verification.
    pub fn program_all(&mut self, target: DeviceState, pulses: &PulseLibrary) -> Result<()> {
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.program_cell(r, c, target, pulses)?;
            }
        }
        Ok(())
    }

    /// CSV dump of the state bitmap.
    pub fn state_csv(&self) -> String {
        self.read_states().to_csv_string()
    }
}
