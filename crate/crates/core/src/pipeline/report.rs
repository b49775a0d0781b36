//! Machine-readable evaluation reports and their human-readable tables.

use serde::{Deserialize, Serialize};

/// One spatial-metric sample point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RPoint {
    pub r: f64,
    pub score: f64,
}

/// Retrieval-quality report for one index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub relevance: String,
    pub include_self: bool,
    pub query_count: usize,
    pub map_at_k: f64,
    pub map_at_k_r: Vec<RPoint>,
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "retrieval evaluation ({} queries, {} relevance)\n",
            self.query_count, self.relevance
        ));
        out.push_str(&format!("  {:<16} {:>10}\n", "metric", "score"));
        out.push_str(&format!("  {:<16} {:>10.4}\n", format!("mAP@{}", self.k), self.map_at_k));
        for point in &self.map_at_k_r {
            out.push_str(&format!(
                "  {:<16} {:>10.4}\n",
                format!("mAP@{}_r={}", self.k, point.r),
                point.score
            ));
        }
        out
    }
}

/// One ablation-variant result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateRow {
    pub variant: String,
    pub map_at_k: f64,
}

/// Ablation report: full model, each removed term, random baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateReport {
    pub k: usize,
    pub relevance: String,
    pub rows: Vec<AblateRow>,
}

impl AblateReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("hash-loss ablation (mAP@{})\n", self.k));
        out.push_str(&format!("  {:<22} {:>10}\n", "variant", format!("mAP@{}", self.k)));
        for row in &self.rows {
            out.push_str(&format!("  {:<22} {:>10.4}\n", row.variant, row.map_at_k));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_render_every_row() {
        let report = EvalReport {
            k: 50,
            relevance: "multi-label".to_string(),
            include_self: false,
            query_count: 12,
            map_at_k: 0.875,
            map_at_k_r: vec![
                RPoint { r: 0.1, score: 0.5 },
                RPoint { r: 0.2, score: 0.75 },
            ],
        };
        let table = report.render_table();
        assert!(table.contains("mAP@50"));
        assert!(table.contains("r=0.1"));
        assert!(table.contains("0.8750"));

        let ablate = AblateReport {
            k: 50,
            relevance: "multi-label".to_string(),
            rows: vec![
                AblateRow {
                    variant: "full".into(),
                    map_at_k: 0.9,
                },
                AblateRow {
                    variant: "random_hyperplanes".into(),
                    map_at_k: 0.6,
                },
            ],
        };
        let table = ablate.render_table();
        assert!(table.contains("full"));
        assert!(table.contains("random_hyperplanes"));
    }

    #[test]
    fn report_json_round_trip() {
        let report = EvalReport {
            k: 10,
            relevance: "single-label".to_string(),
            include_self: true,
            query_count: 3,
            map_at_k: 1.0,
            map_at_k_r: vec![],
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report, back);
    }
}
