use std::fmt::Write;

use hopekit::evaluation::{EvaluationReport, PnpReport, SplitReport};
use hopekit::metrics::{AddReport, PckCurve};

const HEADERS: [&str; 9] = [
    "J-PE", "PA-J-PE", "V-PE", "PA-V-PE", "J-AUC", "V-AUC", "F@5", "F@15", "ADD-0.5D",
];
const LABEL_WIDTH: usize = 18;
const COL_WIDTH: usize = 10;

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:>COL_WIDTH$.2}"),
        None => format!("{:>COL_WIDTH$}", "-"),
    }
}

fn header(out: &mut String, label: &str) {
    let _ = write!(out, "{label:<LABEL_WIDTH$}");
    for h in HEADERS {
        let _ = write!(out, "{h:>COL_WIDTH$}");
    }
    out.push('\n');
}

fn split_row(out: &mut String, label: &str, split: Option<&SplitReport>) {
    let _ = write!(out, "{label:<LABEL_WIDTH$}");
    match split {
        Some(s) => {
            let h = &s.hand;
            for v in [
                Some(h.j_pe),
                h.pa_j_pe,
                h.v_pe,
                h.pa_v_pe,
                Some(h.j_auc),
                h.v_auc,
                h.f_at_5,
                h.f_at_15,
                s.objects.as_ref().map(|o| o.average),
            ] {
                out.push_str(&cell(v));
            }
        }
        None => {
            for _ in HEADERS {
                out.push_str(&cell(None));
            }
        }
    }
    out.push('\n');
}

fn add_lines(out: &mut String, title: &str, report: &AddReport) {
    let _ = writeln!(out, "{title}");
    for (id, rate) in &report.per_instance {
        let _ = writeln!(out, "  {id:<LABEL_WIDTH$}{rate:>COL_WIDTH$.2}");
    }
    let _ = writeln!(
        out,
        "  {:<LABEL_WIDTH$}{:>COL_WIDTH$.2}",
        "average", report.average
    );
}

pub fn evaluation(report: &EvaluationReport) -> String {
    let mut out = String::new();
    header(&mut out, "scene");
    split_row(&mut out, "all scenes", Some(&report.all));
    split_row(&mut out, "hand-only", report.hand_only.as_ref());
    split_row(&mut out, "hand-object", report.hand_object.as_ref());
    if let Some(objects) = &report.all.objects {
        out.push('\n');
        add_lines(&mut out, "ADD-0.5D per object", objects);
    }
    if let Some(buckets) = &report.occlusion {
        out.push('\n');
        let _ = write!(out, "{:<LABEL_WIDTH$}{:>COL_WIDTH$}", "occlusion", "frames");
        for h in &HEADERS[..4] {
            let _ = write!(out, "{h:>COL_WIDTH$}");
        }
        out.push('\n');
        for b in buckets {
            let label = format!(
                "[{:.2}, {:.2}{}",
                b.lower,
                b.upper,
                if b.upper >= 1.0 { "]" } else { ")" }
            );
            let _ = write!(out, "{label:<LABEL_WIDTH$}");
            match &b.metrics {
                Some(m) => {
                    let _ = write!(out, "{:>COL_WIDTH$}", m.count);
                    for v in [Some(m.j_pe), m.pa_j_pe, m.v_pe, m.pa_v_pe] {
                        out.push_str(&cell(v));
                    }
                }
                None => {
                    let _ = write!(out, "{:>COL_WIDTH$}", 0);
                    for _ in 0..4 {
                        out.push_str(&cell(None));
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn pnp(report: &PnpReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<LABEL_WIDTH$}{:>COL_WIDTH$}  status",
        "frame", "ADD"
    );
    for f in &report.frames {
        let status = f.error.as_deref().unwrap_or("ok");
        let _ = writeln!(out, "{:<LABEL_WIDTH$}{}  {status}", f.frame_id, cell(f.add));
    }
    let _ = writeln!(out, "solved={} failed={}", report.solved, report.failed);
    if let Some(objects) = &report.objects {
        add_lines(&mut out, "ADD-0.5D per object", objects);
    }
    out
}

/// Two-column `threshold value` dump of PCK curves.
pub fn curves(joint: &PckCurve, vertex: Option<&PckCurve>) -> String {
    let mut out = String::new();
    let mut dump = |name: &str, c: &PckCurve| {
        let _ = writeln!(out, "# {name}");
        for (t, v) in c.thresholds.iter().zip(&c.pck) {
            let _ = writeln!(out, "{t} {v}");
        }
    };
    dump("joints", joint);
    if let Some(v) = vertex {
        dump("vertices", v);
    }
    out
}
