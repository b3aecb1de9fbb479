//! A seeded `sales` database for examples and tests.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rusqlite::{params, Connection};

pub const DEMO_SEED: u64 = 42;
pub const DEMO_ROWS: usize = 1_000;
pub const REGIONS: [&str; 5] = ["north", "south", "east", "west", "central"];

#[derive(Debug, Clone, PartialEq)]
pub struct SaleRow {
    pub month: String,
    pub region: String,
    pub amount: f64,
}

/// Rows cycle through the twelve months of 2024 and the five regions.
/// Amounts grow by month, carry Gaussian noise and about one row in fifty
/// is a spike.
pub fn demo_rows(seed: u64, n: usize) -> Vec<SaleRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 8.0).expect("finite sigma");
    (0..n)
        .map(|i| {
            let m = i % 12;
            let region = REGIONS[i % REGIONS.len()];
            let mut amount = 100.0 + 12.0 * m as f64 + noise.sample(&mut rng);
            if rng.random_bool(0.02) {
                amount *= 4.0;
            }
            SaleRow {
                month: format!("2024-{:02}-01", m + 1),
                region: region.to_string(),
                amount: (amount * 100.0).round() / 100.0,
            }
        })
        .collect()
}

/// Writes `rows` into a new `sales` table at `path`.
pub fn write_sales_db(path: impl AsRef<Path>, rows: &[SaleRow]) -> rusqlite::Result<()> {
    let mut conn = Connection::open(path)?;
    conn.execute_batch("CREATE TABLE sales (month DATE NOT NULL, region TEXT NOT NULL, amount NUMERIC NOT NULL);")?;
    let tx = conn.transaction()?;
    {
        let mut stmt = tx.prepare("INSERT INTO sales (month, region, amount) VALUES (?1, ?2, ?3)")?;
        for r in rows {
            stmt.execute(params![r.month, r.region, r.amount])?;
        }
    }
    tx.commit()
}

/// The standard fixture: 1,000 rows from [`DEMO_SEED`].
pub fn create_sales_db(path: impl AsRef<Path>) -> rusqlite::Result<Vec<SaleRow>> {
    let rows = demo_rows(DEMO_SEED, DEMO_ROWS);
    write_sales_db(path, &rows)?;
    Ok(rows)
}
