//! Sequential identification of Granger-causality regimes: an initial
//! continuum test, a CUSUM break search, and per-segment subsample tests,
//! all at Šidák-corrected levels so the family-wise error stays below the
//! initial level. At most two breakpoints are announced.

use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::numcore::Matrix;
use crate::process::SubsampleWindow;
use crate::stats::{Family, Method, QuantileGrid, TestResult, TestRunner};

/// Per-step Šidák level `1 - (1 - alpha)^{1/d}`.
pub fn sidak_level(alpha: f64, d: u32) -> f64 {
    1.0 - (1.0 - alpha).powf(1.0 / d as f64)
}

/// The exponents used by each step of the sequential procedure.
#[derive(Clone, Copy, Debug)]
pub struct LevelSchedule {
    pub alpha: f64,
}

impl LevelSchedule {
    pub const STEP1: u32 = 1;
    pub const STEP2_CUSUM: u32 = 2;
    pub const STEP3_SEGMENTS: u32 = 4;
    pub const SECOND_CUSUM: u32 = 5;
    pub const SECOND_SEGMENTS: u32 = 7;

    pub fn exponents() -> [u32; 5] {
        [
            Self::STEP1,
            Self::STEP2_CUSUM,
            Self::STEP3_SEGMENTS,
            Self::SECOND_CUSUM,
            Self::SECOND_SEGMENTS,
        ]
    }

    pub fn level(&self, d: u32) -> f64 {
        sidak_level(self.alpha, d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeLabel {
    Gc,
    NoGc,
    Inconclusive,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Gc => "GC",
            RegimeLabel::NoGc => "noGC",
            RegimeLabel::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: RegimeLabel,
    /// Present when a window was too short to test.
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub step: String,
    pub family: Family,
    pub window: Option<SubsampleWindow>,
    pub level: f64,
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
}

impl TraceEntry {
    fn from_result(step: &str, r: &TestResult) -> Self {
        TraceEntry {
            step: step.to_string(),
            family: r.family,
            window: r.window,
            level: r.level,
            statistic: r.value,
            critical_value: r.critical_value,
            p_value: r.p_value,
            reject: r.reject(),
        }
    }
}

/// Which weighting the procedure uses for its LM and CUSUM statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Sup,
    Exp,
}

#[derive(Clone, Debug)]
pub struct RegimeOptions {
    pub alpha: f64,
    pub method: Method,
    pub variant: Variant,
    /// Confirmation pass over [0, breakpoint2] and [breakpoint1, 1] when
    /// three regimes were found.
    pub refine: bool,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        RegimeOptions {
            alpha: 0.05,
            method: Method::Bootstrap,
            variant: Variant::Exp,
            refine: false,
        }
    }
}

/// Ordered segments with labels, announced breakpoints, and the complete
/// decision trace.
#[derive(Clone, Debug)]
pub struct RegimeReport {
    pub segments: Vec<Segment>,
    pub breakpoints: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    pub alpha: f64,
    /// Optional observation labels (dates) used when rendering.
    pub labels: Option<Vec<String>>,
    pub n: usize,
}

impl RegimeReport {
    pub fn has_label(&self, label: RegimeLabel) -> bool {
        self.segments.iter().any(|s| s.label == label)
    }

    /// Render the human-readable report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Granger-causality regimes (alpha = {}, n = {})\n",
            self.alpha, self.n
        ));
        for s in &self.segments {
            let range = format!(
                "[{:.4}, {:.4}] (obs {}..{})",
                s.start,
                s.end,
                (s.start * self.n as f64).round() as usize + 1,
                (s.end * self.n as f64).round() as usize
            );
            let date = |frac: f64| -> String {
                self.labels
                    .as_ref()
                    .and_then(|l| {
                        let idx = ((frac * self.n as f64).round() as usize)
                            .clamp(1, self.n)
                            - 1;
                        l.get(idx).cloned()
                    })
                    .unwrap_or_default()
            };
            let dates = if self.labels.is_some() {
                format!(" {} .. {}", date(s.start.max(1.0 / self.n as f64)), date(s.end))
            } else {
                String::new()
            };
            out.push_str(&format!("  {range}{dates}: {}", s.label.as_str()));
            if let Some(d) = &s.diagnostic {
                out.push_str(&format!(" ({d})"));
            }
            out.push('\n');
        }
        if self.breakpoints.is_empty() {
            out.push_str("  no breakpoints announced\n");
        } else {
            for (i, b) in self.breakpoints.iter().enumerate() {
                out.push_str(&format!("  breakpoint {} at fraction {:.4}", i + 1, b));
                if let Some(labels) = &self.labels {
                    let idx = ((b * self.n as f64).round() as usize).clamp(1, self.n) - 1;
                    if let Some(d) = labels.get(idx) {
                        out.push_str(&format!(" ({d})"));
                    }
                }
                out.push('\n');
            }
        }
        out.push_str("decision trace:\n");
        for t in &self.trace {
            let w = t
                .window
                .map(|w| format!("[{:.4},{:.4}]", w.a, w.b))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "  {:<22} {:<12} window {:<17} level {:.5} stat {:.5} cv {:.5} p {:.5} -> {}\n",
                t.step,
                t.family.as_str(),
                w,
                t.level,
                t.statistic,
                t.critical_value,
                t.p_value,
                if t.reject { "reject" } else { "accept" }
            ));
        }
        out
    }

    /// Machine-readable key-value document; numeric fields round-trip
    /// bit-exactly.
    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        doc.push("report.alpha", self.alpha);
        doc.push("report.n", self.n);
        doc.push("report.segments", self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            doc.push_f64(format!("segment.{i}.start"), s.start);
            doc.push_f64(format!("segment.{i}.end"), s.end);
            doc.push(format!("segment.{i}.label"), s.label.as_str());
            if let Some(d) = &s.diagnostic {
                doc.push(format!("segment.{i}.diagnostic"), d);
            }
        }
        doc.push("report.breakpoints", self.breakpoints.len());
        for (i, b) in self.breakpoints.iter().enumerate() {
            doc.push_f64(format!("breakpoint.{i}"), *b);
        }
        doc.push("report.trace_len", self.trace.len());
        for (i, t) in self.trace.iter().enumerate() {
            doc.push(format!("trace.{i}.step"), &t.step);
            doc.push(format!("trace.{i}.family"), t.family.as_str());
            if let Some(w) = t.window {
                doc.push_f64(format!("trace.{i}.window.a"), w.a);
                doc.push_f64(format!("trace.{i}.window.b"), w.b);
            }
            doc.push_f64(format!("trace.{i}.level"), t.level);
            doc.push_f64(format!("trace.{i}.statistic"), t.statistic);
            doc.push_f64(format!("trace.{i}.critical_value"), t.critical_value);
            doc.push_f64(format!("trace.{i}.p_value"), t.p_value);
            doc.push(format!("trace.{i}.reject"), t.reject);
        }
        doc
    }
}

struct Machine<'a> {
    y: &'a [f64],
    x: &'a Matrix,
    p: usize,
    grid: &'a QuantileGrid,
    runner: &'a TestRunner,
    schedule: LevelSchedule,
    variant: Variant,
    trace: Vec<TraceEntry>,
}

enum StepOutcome {
    Tested(TestResult),
    TooSmall(String),
}

impl<'a> Machine<'a> {
    fn sup_variant(&self) -> bool {
        self.variant == Variant::Sup
    }

    fn lm_window(&mut self, step: &str, window: SubsampleWindow, level: f64) -> Result<StepOutcome> {
        let outcome = self
            .runner
            .sup_exp_lm_sub(self.y, self.x, self.p, self.grid, &window, level);
        match outcome {
            Ok((sup, exp)) => {
                let r = if self.sup_variant() { sup } else { exp };
                self.trace.push(TraceEntry::from_result(step, &r));
                Ok(StepOutcome::Tested(r))
            }
            Err(Error::WindowTooSmall {
                observations,
                columns,
            }) => Ok(StepOutcome::TooSmall(format!(
                "window [{:.4},{:.4}] has {observations} observations for {columns} columns",
                window.a, window.b
            ))),
            Err(e) => Err(e),
        }
    }

    fn cusum_window(
        &mut self,
        step: &str,
        window: SubsampleWindow,
        level: f64,
    ) -> Result<std::result::Result<(TestResult, f64), String>> {
        match self
            .runner
            .cusum(self.y, self.x, self.p, self.grid, &window, self.sup_variant(), level)
        {
            Ok(out) => {
                self.trace.push(TraceEntry::from_result(step, &out.result));
                Ok(Ok((out.result, out.break_fraction)))
            }
            Err(Error::WindowTooSmall {
                observations,
                columns,
            }) => Ok(Err(format!(
                "window [{:.4},{:.4}] has {observations} observations for {columns} columns",
                window.a, window.b
            ))),
            Err(e) => Err(e),
        }
    }
}

/// Run the sequential regime-identification procedure.
pub fn detect_regimes(
    y: &[f64],
    x: &Matrix,
    p: usize,
    grid: &QuantileGrid,
    opts: &RegimeOptions,
    runner: &TestRunner,
) -> Result<RegimeReport> {
    let n = x.rows();
    let schedule = LevelSchedule { alpha: opts.alpha };
    let mut machine = Machine {
        y,
        x,
        p,
        grid,
        runner,
        schedule,
        variant: opts.variant,
        trace: Vec::new(),
    };

    let seg = |start: f64, end: f64, label: RegimeLabel| Segment {
        start,
        end,
        label,
        diagnostic: None,
    };
    let seg_diag = |start: f64, end: f64, label: RegimeLabel, d: String| Segment {
        start,
        end,
        label,
        diagnostic: Some(d),
    };

    // Step 1: the full-sample continuum test at the initial level
    let full = SubsampleWindow::full();
    let level1 = machine.schedule.level(LevelSchedule::STEP1);
    let step1 = {
        let (sup, exp) = runner.sup_exp_lm(y, x, p, grid, level1)?;
        let r = if machine.sup_variant() { sup } else { exp };
        machine.trace.push(TraceEntry::from_result("step1-lm", &r));
        r
    };
    if !step1.reject() {
        return Ok(RegimeReport {
            segments: vec![seg_diag(
                0.0,
                1.0,
                RegimeLabel::NoGc,
                "not rejected at the initial level".into(),
            )],
            breakpoints: vec![],
            trace: machine.trace,
            alpha: opts.alpha,
            labels: None,
            n,
        });
    }

    // Step 2: CUSUM on the full sample; non-rejection means stable causality
    let level2 = machine.schedule.level(LevelSchedule::STEP2_CUSUM);
    let (cusum1, lambda1) = match machine.cusum_window("step2-cusum", full, level2)? {
        Ok(pair) => pair,
        Err(diag) => {
            return Ok(RegimeReport {
                segments: vec![seg_diag(0.0, 1.0, RegimeLabel::Inconclusive, diag)],
                breakpoints: vec![],
                trace: machine.trace,
                alpha: opts.alpha,
                labels: None,
                n,
            })
        }
    };
    if !cusum1.reject() {
        return Ok(RegimeReport {
            segments: vec![seg(0.0, 1.0, RegimeLabel::Gc)],
            breakpoints: vec![],
            trace: machine.trace,
            alpha: opts.alpha,
            labels: None,
            n,
        });
    }

    // Step 3: test the two segments flanking the first break
    let level3 = machine.schedule.level(LevelSchedule::STEP3_SEGMENTS);
    let left_w = SubsampleWindow::new(0.0, lambda1)?;
    let right_w = SubsampleWindow::new(lambda1, 1.0)?;
    let left = machine.lm_window("step3-lm-left", left_w, level3)?;
    let right = machine.lm_window("step3-lm-right", right_w, level3)?;

    let mut report = RegimeReport {
        segments: vec![],
        breakpoints: vec![lambda1],
        trace: vec![],
        alpha: opts.alpha,
        labels: None,
        n,
    };

    use StepOutcome::*;
    match (&left, &right) {
        (TooSmall(dl), TooSmall(dr)) => {
            report.segments = vec![
                seg_diag(0.0, lambda1, RegimeLabel::Inconclusive, dl.clone()),
                seg_diag(lambda1, 1.0, RegimeLabel::Inconclusive, dr.clone()),
            ];
        }
        (Tested(l), Tested(r)) if !l.reject() && !r.reject() => {
            // contradicts the Step-1 rejection: inconclusive on the whole
            report.segments = vec![
                seg(0.0, lambda1, RegimeLabel::Inconclusive),
                seg(lambda1, 1.0, RegimeLabel::Inconclusive),
            ];
        }
        (Tested(l), Tested(r)) if l.reject() != r.reject() => {
            // one causal side: search it for a second break
            let (quiet_first, active_w, quiet_seg, active_range) = if r.reject() {
                (
                    true,
                    right_w,
                    seg(0.0, lambda1, RegimeLabel::NoGc),
                    (lambda1, 1.0),
                )
            } else {
                (
                    false,
                    left_w,
                    seg(lambda1, 1.0, RegimeLabel::NoGc),
                    (0.0, lambda1),
                )
            };
            let level_c = machine.schedule.level(LevelSchedule::SECOND_CUSUM);
            let cusum2 = machine.cusum_window("step3-cusum-segment", active_w, level_c)?;
            let mut segments = second_level_split(
                &mut machine,
                cusum2,
                active_range,
                report.breakpoints.as_mut(),
            )?;
            if quiet_first {
                let mut all = vec![quiet_seg];
                all.append(&mut segments);
                report.segments = all;
            } else {
                segments.push(quiet_seg);
                report.segments = segments;
            }
        }
        (Tested(_), Tested(_)) => {
            // both segments reject: one max-of-two CUSUM on both segments
            let level_c = machine.schedule.level(LevelSchedule::SECOND_CUSUM);
            let (max_res, out_l, out_r) = runner.max_two_cusum(
                y,
                x,
                p,
                grid,
                &left_w,
                &right_w,
                machine.sup_variant(),
                level_c,
            )?;
            machine
                .trace
                .push(TraceEntry::from_result("step3-max-two-cusum", &max_res));
            if !max_res.reject() {
                report.segments = vec![
                    seg(0.0, lambda1, RegimeLabel::Gc),
                    seg(lambda1, 1.0, RegimeLabel::Gc),
                ];
            } else {
                // the winning segment supplies the second break
                let winner_right = out_r.result.value >= out_l.result.value;
                if winner_right {
                    let active_range = (lambda1, 1.0);
                    let cusum2 = Ok((out_r.result.clone(), out_r.break_fraction));
                    let mut segments = second_level_split(
                        &mut machine,
                        cusum2,
                        active_range,
                        report.breakpoints.as_mut(),
                    )?;
                    let mut all = vec![seg(0.0, lambda1, RegimeLabel::Gc)];
                    all.append(&mut segments);
                    report.segments = all;
                } else {
                    let active_range = (0.0, lambda1);
                    let cusum2 = Ok((out_l.result.clone(), out_l.break_fraction));
                    let mut segments = second_level_split(
                        &mut machine,
                        cusum2,
                        active_range,
                        report.breakpoints.as_mut(),
                    )?;
                    segments.push(seg(lambda1, 1.0, RegimeLabel::Gc));
                    report.segments = segments;
                }
            }
        }
        (TooSmall(d), Tested(r)) => {
            report.segments = vec![
                seg_diag(0.0, lambda1, RegimeLabel::Inconclusive, d.clone()),
                seg(
                    lambda1,
                    1.0,
                    if r.reject() {
                        RegimeLabel::Gc
                    } else {
                        RegimeLabel::NoGc
                    },
                ),
            ];
        }
        (Tested(l), TooSmall(d)) => {
            report.segments = vec![
                seg(
                    0.0,
                    lambda1,
                    if l.reject() {
                        RegimeLabel::Gc
                    } else {
                        RegimeLabel::NoGc
                    },
                ),
                seg_diag(lambda1, 1.0, RegimeLabel::Inconclusive, d.clone()),
            ];
        }
    }

    report.breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // optional confirmation pass when three regimes were identified
    if opts.refine && report.breakpoints.len() == 2 {
        let (b1, b2) = (report.breakpoints[0], report.breakpoints[1]);
        let level_c = machine.schedule.level(LevelSchedule::SECOND_CUSUM);
        for (name, a, b) in [("refine-cusum-left", 0.0, b2), ("refine-cusum-right", b1, 1.0)] {
            if let Ok(w) = SubsampleWindow::new(a, b) {
                let _ = machine.cusum_window(name, w, level_c)?;
            }
        }
    }

    report.trace = machine.trace;
    Ok(report)
}

/// Handle the second-level CUSUM outcome on the active segment `(a, b)`:
/// either the segment is uniformly causal, or a second break splits it and
/// both halves are tested at the deepest level.
fn second_level_split(
    machine: &mut Machine<'_>,
    cusum: std::result::Result<(TestResult, f64), String>,
    range: (f64, f64),
    breakpoints: &mut Vec<f64>,
) -> Result<Vec<Segment>> {
    let (a, b) = range;
    let seg = |start: f64, end: f64, label: RegimeLabel| Segment {
        start,
        end,
        label,
        diagnostic: None,
    };
    let (cusum_res, lambda2) = match cusum {
        Ok(pair) => pair,
        Err(diag) => {
            return Ok(vec![Segment {
                start: a,
                end: b,
                label: RegimeLabel::Inconclusive,
                diagnostic: Some(diag),
            }])
        }
    };
    if !cusum_res.reject() {
        return Ok(vec![seg(a, b, RegimeLabel::Gc)]);
    }
    breakpoints.push(lambda2);
    let level = machine.schedule.level(LevelSchedule::SECOND_SEGMENTS);
    let first_w = SubsampleWindow::new(a, lambda2)?;
    let second_w = SubsampleWindow::new(lambda2, b)?;
    let first = machine.lm_window("second-lm-left", first_w, level)?;
    let second = machine.lm_window("second-lm-right", second_w, level)?;

    let label_of = |o: &StepOutcome| match o {
        StepOutcome::Tested(r) if r.reject() => (RegimeLabel::Gc, None),
        StepOutcome::Tested(_) => (RegimeLabel::NoGc, None),
        StepOutcome::TooSmall(d) => (RegimeLabel::Inconclusive, Some(d.clone())),
    };

    if let (StepOutcome::Tested(f), StepOutcome::Tested(s)) = (&first, &second) {
        if !f.reject() && !s.reject() {
            return Ok(vec![
                seg(a, lambda2, RegimeLabel::Inconclusive),
                seg(lambda2, b, RegimeLabel::Inconclusive),
            ]);
        }
    }
    let (l1, d1) = label_of(&first);
    let (l2, d2) = label_of(&second);
    Ok(vec![
        Segment {
            start: a,
            end: lambda2,
            label: l1,
            diagnostic: d1,
        },
        Segment {
            start: lambda2,
            end: b,
            label: l2,
            diagnostic: d2,
        },
    ])
}
