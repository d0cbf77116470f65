//! Static stacked-bar chart of participant allocation.

use std::fmt::Write;

use blrmpk::simulator::StudyResult;

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 170.0;
const BAR_W: f64 = 420.0;
const BAR_H: f64 = 28.0;
const ROW_GAP: f64 = 14.0;
const TOP: f64 = 40.0;

const BANDS: [(&str, &str); 3] = [("TT", "#4c72b0"), ("OD", "#c44e52"), ("UD", "#8c8c8c")];

/// One horizontal bar per study, split into TT / OD / UD shares.
pub fn allocation_chart(studies: &[StudyResult]) -> String {
    let height = TOP + studies.len() as f64 * (BAR_H + ROW_GAP) + 40.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="10" y="22" font-size="14">Participant allocation (%)</text>"#).unwrap();

    for (row, study) in studies.iter().enumerate() {
        let y = TOP + row as f64 * (BAR_H + ROW_GAP);
        let label = format!("{} {} sd={}", study.scenario, study.kind.label(), study.pk_log_sd);
        writeln!(s, r#"<text x="10" y="{:.1}">{}</text>"#, y + BAR_H * 0.65, escape(&label)).unwrap();
        let oc = &study.oc;
        let shares = [oc.pct_participants_tt, oc.pct_participants_od, oc.pct_participants_ud];
        let mut x = LABEL_W;
        for ((name, colour), pct) in BANDS.iter().zip(shares) {
            let w = BAR_W * pct / 100.0;
            writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{BAR_H}" fill="{colour}"><title>{name} {pct:.2}%</title></rect>"#
            )
            .unwrap();
            if pct >= 8.0 {
                writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.1}" fill="white" text-anchor="middle">{pct:.1}</text>"#,
                    x + w / 2.0,
                    y + BAR_H * 0.65
                )
                .unwrap();
            }
            x += w;
        }
    }

    let ly = TOP + studies.len() as f64 * (BAR_H + ROW_GAP) + 10.0;
    for (i, (name, colour)) in BANDS.iter().enumerate() {
        let lx = LABEL_W + i as f64 * 70.0;
        writeln!(s, r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{colour}"/>"#).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, lx + 16.0, ly + 10.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b&c>"), "a&lt;b&amp;c&gt;");
    }

    #[test]
    fn empty_chart_is_well_formed() {
        let svg = allocation_chart(&[]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
