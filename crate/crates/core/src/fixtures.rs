//! Bundled reference data and synthetic dataset generators used by the
//! benchmark harness, the acceptance suite and the CLI examples.
//!
//! The service taxonomy encodes the summable balance-of-payments credit
//! classification: one layer-0 total, twelve layer-1 aggregates and the
//! complete set of 27 codes (3 layer-1 leaves plus 24 layer-2 leaves) from
//! which every aggregate can be rebuilt by summation. The goods list holds
//! the 96 two-digit trade chapters (01-97 minus the unused chapter 77; the
//! catch-all chapter 99 is excluded as not being a well defined sector), so
//! a universal panel spans 96 + 27 = 123 activities.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::complexity::CompetitivenessMatrix;
use crate::panel::ExportPanel;
use crate::seed;
use crate::taxonomy::TaxonomyTree;

/// The bundled service classification (see module docs).
pub const TAXONOMY_CSV: &str = "\
code,parent,layer,description,complete_set
BXS,,0,Services total credits,0
BXSOGGS,BXS,1,Government goods and services,1
BXSORL,BXS,1,Charges for the use of intellectual property,1
BXSR,BXS,1,Maintenance and repair,1
BXSM,BXS,1,Manufacturing services,0
BXSMA,BXSM,2,Goods for processing abroad,1
BXSMR,BXSM,2,Goods for processing inside,1
BXSOTCM,BXS,1,Telecommunications computer and information services,0
BXSOTCMT,BXSOTCM,2,Telecommunications services,1
BXSOTCMM,BXSOTCM,2,Information services,1
BXSOTCMC,BXSOTCM,2,Computer services,1
BXSOPCR,BXS,1,Personal cultural and recreational services,0
BXSOPCRO,BXSOPCR,2,Cultural and recreational,1
BXSOPCRAU,BXSOPCR,2,Audiovisual,1
BXSOOB,BXS,1,Other business services,0
BXSOOBTT,BXSOOB,2,Technical trade-related and other business,1
BXSOOBRD,BXSOOB,2,Research and development,1
BXSOOBPM,BXSOOB,2,Consulting,1
BXSOIN,BXS,1,Insurance and pension services,0
BXSOINRI,BXSOIN,2,Reinsurance,1
BXSOINPG,BXSOIN,2,Pension,1
BXSOIND,BXSOIN,2,Direct insurance,1
BXSOINAI,BXSOIN,2,Auxiliary insurance services,1
BXSOFI,BXS,1,Financial services,0
BXSOFIFISM,BXSOFI,2,FISIM,1
BXSOFIEX,BXSOFI,2,Explicitly charged and other financial services,1
BXSOCN,BXS,1,Construction,0
BXSOCNA,BXSOCN,2,Construction abroad,1
BXSOCNAR,BXSOCN,2,Construction inside,1
BXSTV,BXS,1,Travel,0
BXSTVB,BXSTV,2,Travel business,1
BXSTVP,BXSTV,2,Travel personal,1
BXSTR,BXS,1,Transport,0
BXSTRS,BXSTR,2,Sea transport,1
BXSTRPC,BXSTR,2,Postal and courier,1
BXSTROT,BXSTR,2,Other passenger transport,1
BXSTRA,BXSTR,2,Air transport,1
";

/// Parses the bundled taxonomy.
pub fn taxonomy() -> TaxonomyTree {
    TaxonomyTree::from_reader(TAXONOMY_CSV.as_bytes(), "<bundled taxonomy>")
        .expect("bundled taxonomy is valid")
}

/// The 96 two-digit goods chapters: 01-97 without the unused chapter 77.
pub fn goods_codes() -> Vec<String> {
    (1..=97)
        .filter(|&c| c != 77)
        .map(|c| format!("{c:02}"))
        .collect()
}

/// Synthetic ISO-3-style country codes (AAA, AAB, ...).
pub fn country_codes(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let a = (i / 676) % 26;
            let b = (i / 26) % 26;
            let c = i % 26;
            format!(
                "{}{}{}",
                (b'A' + a as u8) as char,
                (b'A' + b as u8) as char,
                (b'A' + c as u8) as char
            )
        })
        .collect()
}

/// Shape of a synthetic universal dataset.
#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub countries: usize,
    pub start_year: i32,
    pub years: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            countries: 160,
            start_year: 1996,
            years: 23,
            clusters: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub goods: ExportPanel,
    pub services: ExportPanel,
    pub gdp: ExportPanel,
}

/// Generates a full synthetic dataset: a complete goods panel over the 96
/// chapters, a services panel over the 27 complete-set codes with realistic
/// missingness (leading gaps plus scattered holes), and a GDP indicator
/// correlated with country size. Deterministic for a given seed.
pub fn synthetic_universal(cfg: &SyntheticConfig) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[0xDA7A]));
    let countries = country_codes(cfg.countries);
    let years: Vec<i32> = (cfg.start_year..cfg.start_year + cfg.years as i32).collect();
    let goods = goods_codes();
    let services: Vec<String> = taxonomy()
        .complete_set()
        .iter()
        .map(|s| (*s).to_owned())
        .collect();

    let n_act = goods.len() + services.len();
    let popularity = Normal::<f64>::new(0.0, 1.0).unwrap();
    let cluster_noise = Normal::<f64>::new(0.0, 1.0).unwrap();
    let walk = Normal::<f64>::new(0.02, 0.18).unwrap();
    let cell_noise = Normal::<f64>::new(0.0, 0.2).unwrap();

    // activity popularity and per-cluster taste profiles
    let mu: Vec<f64> = (0..n_act).map(|_| popularity.sample(&mut rng)).collect();
    let profiles: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| {
            (0..n_act)
                .map(|a| (mu[a] + cluster_noise.sample(&mut rng)).exp())
                .collect()
        })
        .collect();
    let cluster_of: Vec<usize> = (0..cfg.countries)
        .map(|_| rng.random_range(0..cfg.clusters))
        .collect();

    // country size: geometric random walk
    let mut size = vec![vec![0.0; cfg.years]; cfg.countries];
    for c in 0..cfg.countries {
        let mut log_s = 9.0 * std::f64::consts::LN_10 * (0.6 + 0.4 * rng.random::<f64>());
        for (t, s) in size[c].iter_mut().enumerate() {
            if t > 0 {
                log_s += walk.sample(&mut rng);
            }
            *s = log_s.exp();
        }
    }

    let value_at = |rng: &mut ChaCha8Rng, c: usize, a: usize, t: usize| -> f64 {
        size[c][t] * profiles[cluster_of[c]][a] * cell_noise.sample(rng).exp()
    };

    let mut goods_panel = ExportPanel::new_missing(countries.clone(), goods.clone(), years.clone())
        .expect("valid axes");
    for c in 0..cfg.countries {
        for a in 0..goods.len() {
            for t in 0..cfg.years {
                goods_panel.set(c, a, t, value_at(&mut rng, c, a, t));
            }
        }
    }

    let mut services_panel =
        ExportPanel::new_missing(countries.clone(), services.clone(), years.clone())
            .expect("valid axes");
    for c in 0..cfg.countries {
        for a in 0..services.len() {
            // leading gap: some series only start being reported later
            let lead = if rng.random::<f64>() < 0.35 {
                rng.random_range(1..cfg.years.min(12))
            } else {
                0
            };
            for t in 0..cfg.years {
                // draw the value unconditionally so the missing pattern
                // does not shift the value stream
                let v = value_at(&mut rng, c, goods.len() + a, t);
                if t < lead || rng.random::<f64>() < 0.05 {
                    continue;
                }
                services_panel.set(c, a, t, v);
            }
        }
    }

    let gdp_noise = Normal::<f64>::new(0.0, 0.1).unwrap();
    let mut gdp = ExportPanel::new_missing(countries.clone(), vec!["GDP".into()], years.clone())
        .expect("valid axes");
    for c in 0..cfg.countries {
        for t in 0..cfg.years {
            gdp.set(c, 0, t, size[c][t] * 1.3 * gdp_noise.sample(&mut rng).exp());
        }
    }

    SyntheticData {
        goods: goods_panel,
        services: services_panel,
        gdp,
    }
}

/// Fully observed services panel with clustered economies and volatile
/// country sizes: cross-sections are highly informative while time series
/// are noisy, the regime in which donor-based reconstruction pays off.
pub fn correlated_services_panel(
    n_countries: usize,
    n_years: usize,
    master_seed: u64,
) -> ExportPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &[0xC0DE]));
    let tree = taxonomy();
    let codes: Vec<String> = tree.complete_set().iter().map(|s| (*s).to_owned()).collect();
    let countries = country_codes(n_countries);
    let years: Vec<i32> = (2000..2000 + n_years as i32).collect();

    let clusters = 5usize;
    let popularity = Normal::<f64>::new(0.0, 0.8).unwrap();
    let taste = Normal::<f64>::new(0.0, 1.0).unwrap();
    let walk = Normal::<f64>::new(0.0, 0.3).unwrap();
    let noise = Normal::<f64>::new(0.0, 0.05).unwrap();

    let mu: Vec<f64> = (0..codes.len()).map(|_| popularity.sample(&mut rng)).collect();
    let profiles: Vec<Vec<f64>> = (0..clusters)
        .map(|_| {
            (0..codes.len())
                .map(|a| (mu[a] + taste.sample(&mut rng)).exp())
                .collect()
        })
        .collect();

    let mut panel =
        ExportPanel::new_missing(countries, codes.clone(), years).expect("valid axes");
    for c in 0..n_countries {
        let g = c % clusters;
        let mut log_s = 13.0 + 2.0 * rng.random::<f64>();
        for t in 0..n_years {
            if t > 0 {
                log_s += walk.sample(&mut rng);
            }
            let s = log_s.exp();
            for a in 0..codes.len() {
                panel.set(c, a, t, s * profiles[g][a] * noise.sample(&mut rng).exp());
            }
        }
    }
    panel
}

/// Random binary matrix of the given density; optionally guarantees every
/// row and column a positive degree by planting one cell where needed.
pub fn random_binary_matrix(
    nc: usize,
    na: usize,
    density: f64,
    seed_value: u64,
    positive_degrees: bool,
) -> CompetitivenessMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_value);
    let mut cells = Array2::zeros((nc, na));
    for v in cells.iter_mut() {
        *v = if rng.random::<f64>() < density { 1.0 } else { 0.0 };
    }
    if positive_degrees {
        for r in 0..nc {
            if cells.row(r).sum() == 0.0 {
                let j = rng.random_range(0..na);
                cells[[r, j]] = 1.0;
            }
        }
        for c in 0..na {
            if cells.column(c).sum() == 0.0 {
                let i = rng.random_range(0..nc);
                cells[[i, c]] = 1.0;
            }
        }
    }
    CompetitivenessMatrix::binary(
        country_codes(nc),
        (0..na).map(|i| format!("S{i:02}")).collect(),
        2000,
        cells,
    )
    .expect("cells are binary")
}

/// Parameters of the planted progression fixture: 24 countries over 6
/// years; 14 specialists always export activity S00 plus two rotating
/// extras and, from the second year on, S01 (forced by S00 one year
/// earlier); 10 generalists export four rotating activities outside
/// {S00, S01}. The deterministic S00 -> S01 progression at lag 1 is the
/// planted signal.
pub const PLANTED_SOURCE: &str = "S00";
pub const PLANTED_TARGET: &str = "S01";

fn planted_occupancy(master_seed: u64) -> Vec<Array2<f64>> {
    let n_countries = 24;
    let n_specialists = 14;
    let n_activities = 12;
    let n_years = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &[0xB1A5]));
    let mut mats = Vec::new();
    for t in 0..n_years {
        let mut m = Array2::zeros((n_countries, n_activities));
        for c in 0..n_countries {
            if c < n_specialists {
                m[[c, 0]] = 1.0; // always S00
                if t >= 1 {
                    m[[c, 1]] = 1.0; // S01 forced by S00 at t-1
                }
                for j in rand::seq::index::sample(&mut rng, n_activities - 2, 2).iter() {
                    m[[c, j + 2]] = 1.0;
                }
            } else {
                for j in rand::seq::index::sample(&mut rng, n_activities - 2, 4).iter() {
                    m[[c, j + 2]] = 1.0;
                }
            }
        }
        mats.push(m);
    }
    mats
}

/// Planted progression fixture as binary yearly matrices.
pub fn planted_progression_matrices(master_seed: u64) -> Vec<CompetitivenessMatrix> {
    let countries = country_codes(24);
    let activities: Vec<String> = (0..12).map(|i| format!("S{i:02}")).collect();
    planted_occupancy(master_seed)
        .into_iter()
        .enumerate()
        .map(|(t, cells)| {
            CompetitivenessMatrix::binary(
                countries.clone(),
                activities.clone(),
                2000 + t as i32,
                cells,
            )
            .expect("cells are binary")
        })
        .collect()
}

/// The same fixture as an export panel: every in-basket cell carries the
/// same dollar value, which makes the binarized RCA reproduce the
/// occupancy exactly (an in-basket cell has RCA = U / (u_c * d_a) >= 1 on
/// this fixture).
pub fn planted_progression_panel(master_seed: u64) -> ExportPanel {
    let countries = country_codes(24);
    let activities: Vec<String> = (0..12).map(|i| format!("S{i:02}")).collect();
    let occupancy = planted_occupancy(master_seed);
    let years: Vec<i32> = (0..occupancy.len()).map(|t| 2000 + t as i32).collect();
    let mut panel = ExportPanel::new_missing(countries, activities, years).expect("valid axes");
    for (t, m) in occupancy.iter().enumerate() {
        for ((c, a), &v) in m.indexed_iter() {
            if v == 1.0 {
                panel.set(c, a, t, 1000.0);
            }
        }
    }
    panel
}
