//! Published expert-annotation leaderboards, kept as reference data.
//!
//! Columns follow [`crate::model::Dimension::ALL`], then the published average.

use crate::model::Track;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub method: &'static str,
    pub dims: [f64; 5],
    pub average: f64,
}

const fn row(method: &'static str, dims: [f64; 5], average: f64) -> ReferenceRow {
    ReferenceRow { method, dims, average }
}

pub const TEXT_TO_3D: [ReferenceRow; 9] = [
    row("MVDream", [1107.90, 1182.60, 1229.61, 1270.78, 1095.39], 1177.66),
    row("LucidDreamer", [1105.05, 1133.85, 1158.18, 1163.19, 1000.79], 1122.21),
    row("Magic3D", [1143.94, 1100.30, 1046.93, 1042.77, 1106.71], 1088.93),
    row("GRM", [1032.35, 1026.28, 1100.23, 1111.33, 1058.49], 1065.74),
    row("DreamFusion", [1084.69, 1029.05, 1030.02, 1009.73, 1066.99], 1044.10),
    row("Latent-NeRF", [986.09, 938.78, 1046.76, 1130.76, 983.47], 1017.97),
    row("Shap-E", [889.87, 890.49, 849.57, 764.86, 981.75], 875.71),
    row("SJC", [837.64, 821.15, 906.59, 852.02, 777.70], 839.71),
    row("Point-E", [812.47, 877.50, 632.11, 654.56, 928.72], 781.71),
];

pub const IMAGE_TO_3D: [ReferenceRow; 13] = [
    row("Wonder3D", [1333.95, 1308.03, 1347.60, 1321.71, 1210.94], 1304.05),
    row("OpenLRM", [1294.69, 1330.10, 1270.31, 1260.36, 1244.88], 1279.67),
    row("Stable Zero123", [1222.58, 1157.20, 1243.73, 1225.31, 1154.64], 1200.69),
    row("Zero123-XL", [1092.45, 1142.73, 1140.74, 1213.14, 1055.74], 1128.96),
    row("Magic123", [1076.61, 1038.36, 1166.43, 1194.64, 1082.10], 1111.23),
    row("LGM", [1058.78, 1060.23, 1066.24, 1068.82, 1049.68], 1060.35),
    row("GRM", [1038.48, 1067.10, 1062.29, 1025.53, 1059.53], 1042.99),
    row("SyncDreamer", [1079.61, 1081.16, 997.50, 971.29, 905.29], 1006.97),
    row("Shap-E", [965.11, 993.74, 905.02, 906.95, 996.59], 953.48),
    row("TriplaneGaussian", [840.28, 819.21, 880.53, 893.25, 836.79], 854.01),
    row("Point-E", [740.57, 769.02, 707.68, 704.43, 916.69], 767.68),
    row("EscherNet", [721.99, 690.57, 689.32, 728.21, 843.21], 734.66),
    row("Free3D", [534.90, 542.55, 522.61, 486.36, 643.91], 546.47),
];

pub fn table(track: Track) -> &'static [ReferenceRow] {
    match track {
        Track::TextTo3d => &TEXT_TO_3D,
        Track::ImageTo3d => &IMAGE_TO_3D,
    }
}

/// Methods by descending published average.
pub fn reference_ranking(track: Track) -> Vec<&'static str> {
    crate::rating::rank_ratings(table(track).iter().map(|r| (r.method, r.average)))
        .into_iter()
        .map(|m| table(track).iter().find(|r| r.method == m).unwrap().method)
        .collect()
}

/// Top three text-to-3D methods by average.
pub const TEXT_TO_3D_TOP3: [&str; 3] = ["MVDream", "LucidDreamer", "Magic3D"];
