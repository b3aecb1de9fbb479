//! Connections, the embedded engine and the per-config connection pool.

use std::collections::HashMap;
use std::path::Path;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};

use super::dialect::{DialectAdapter, EmbeddedAdapter, ServerAdapter};
use super::{ConnectionConfig, Dialect, ForeignKey, SqlError};
use crate::table::Value;

/// Raw catalog entry as reported by a driver, before semantic typing.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogTable {
    pub name: String,
    pub columns: Vec<CatalogColumn>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub row_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogColumn {
    pub name: String,
    pub declared_type: String,
    pub distinct_count: u64,
    pub samples: Vec<String>,
}

/// Rows returned by a driver; `declared_types` is `None` for computed
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResult {
    pub columns: Vec<String>,
    pub declared_types: Vec<Option<String>>,
    pub rows: Vec<Vec<Value>>,
    /// True when more rows were available than the cap allowed.
    pub capped: bool,
}

pub trait SqlConnection: Send {
    fn catalog(&mut self) -> Result<Vec<CatalogTable>, SqlError>;

    fn query(&mut self, sql: &str, row_cap: usize, deadline: Duration) -> Result<RawResult, SqlError>;
}

/// Read-only SQLite connection.
pub struct SqliteConnection {
    conn: Connection,
}

impl SqliteConnection {
    pub fn open(path: &str) -> Result<Self, SqlError> {
        let p = Path::new(path);
        match std::fs::File::open(p) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::PermissionDenied => {
                return Err(SqlError::PermissionDenied(path.to_string()))
            }
            Err(e) => return Err(SqlError::ConnectionFailed(format!("{path}: {e}"))),
        }
        if p.is_dir() {
            return Err(SqlError::ConnectionFailed(format!("{path} is a directory")));
        }
        let conn = Connection::open_with_flags(
            p,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )
        .map_err(|e| SqlError::ConnectionFailed(e.to_string()))?;
        conn.execute_batch("PRAGMA query_only = 1;")
            .map_err(|e| SqlError::ConnectionFailed(e.to_string()))?;
        // Touch the schema so a non-database file fails here, not mid-turn.
        conn.query_row("SELECT count(*) FROM sqlite_master", [], |r| r.get::<_, i64>(0))
            .map_err(|e| SqlError::ConnectionFailed(e.to_string()))?;
        Ok(Self { conn })
    }

    fn string_column(&self, sql: &str) -> Result<Vec<String>, SqlError> {
        let mut stmt = self.conn.prepare(sql).map_err(failed)?;
        let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(failed)?;
        rows.collect::<Result<Vec<_>, _>>().map_err(failed)
    }
}

fn failed(e: rusqlite::Error) -> SqlError {
    SqlError::ExecutionFailed(e.to_string())
}

fn quote(ident: &str) -> String {
    EmbeddedAdapter.quote_ident(ident)
}

fn sql_string(text: &str) -> String {
    format!("'{}'", text.replace('\'', "''"))
}

fn value_from_ref(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Int(i),
        ValueRef::Real(f) if f.is_finite() => Value::Float(f),
        ValueRef::Real(_) => Value::Null,
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Text(format!("<blob {} bytes>", b.len())),
    }
}

impl SqlConnection for SqliteConnection {
    fn catalog(&mut self) -> Result<Vec<CatalogTable>, SqlError> {
        let names = self.string_column(
            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name",
        )?;
        let mut tables = Vec::with_capacity(names.len());
        for name in names {
            let mut cols: Vec<(i64, String, String, i64)> = Vec::new();
            {
                let mut stmt = self
                    .conn
                    .prepare(&format!("SELECT cid, name, type, pk FROM pragma_table_info({})", sql_string(&name)))
                    .map_err(failed)?;
                let rows = stmt
                    .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))
                    .map_err(failed)?;
                for row in rows {
                    cols.push(row.map_err(failed)?);
                }
            }
            cols.sort_by_key(|c| c.0);
            let mut pk: Vec<(i64, String)> =
                cols.iter().filter(|c| c.3 > 0).map(|c| (c.3, c.1.clone())).collect();
            pk.sort();
            let primary_key: Vec<String> = pk.into_iter().map(|(_, n)| n).collect();

            let mut foreign_keys = Vec::new();
            {
                let mut stmt = self
                    .conn
                    .prepare(&format!(
                        "SELECT \"from\", \"table\", \"to\" FROM pragma_foreign_key_list({}) ORDER BY id, seq",
                        sql_string(&name)
                    ))
                    .map_err(failed)?;
                let rows = stmt
                    .query_map([], |r| {
                        Ok(ForeignKey {
                            column: r.get(0)?,
                            ref_table: r.get(1)?,
                            ref_column: r.get::<_, Option<String>>(2)?.unwrap_or_default(),
                        })
                    })
                    .map_err(failed)?;
                for row in rows {
                    foreign_keys.push(row.map_err(failed)?);
                }
            }

            let row_count: i64 = self
                .conn
                .query_row(&format!("SELECT count(*) FROM {}", quote(&name)), [], |r| r.get(0))
                .map_err(failed)?;
            let order = if primary_key.is_empty() {
                "rowid".to_string()
            } else {
                primary_key.iter().map(|c| quote(c)).collect::<Vec<_>>().join(", ")
            };

            let mut columns = Vec::with_capacity(cols.len());
            for (_, col, declared, _) in &cols {
                let distinct: i64 = self
                    .conn
                    .query_row(
                        &format!("SELECT count(DISTINCT {}) FROM {}", quote(col), quote(&name)),
                        [],
                        |r| r.get(0),
                    )
                    .map_err(failed)?;
                let sample_sql = format!(
                    "SELECT {c} FROM {t} WHERE {c} IS NOT NULL ORDER BY {order} LIMIT 5",
                    c = quote(col),
                    t = quote(&name)
                );
                // WITHOUT ROWID tables have no rowid to order by; fall back to
                // natural order.
                let samples = match self.sample_values(&sample_sql) {
                    Ok(s) => s,
                    Err(_) => self.sample_values(&format!(
                        "SELECT {c} FROM {t} WHERE {c} IS NOT NULL LIMIT 5",
                        c = quote(col),
                        t = quote(&name)
                    ))?,
                };
                columns.push(CatalogColumn {
                    name: col.clone(),
                    declared_type: declared.clone(),
                    distinct_count: distinct.max(0) as u64,
                    samples,
                });
            }
            tables.push(CatalogTable {
                name,
                columns,
                primary_key,
                foreign_keys,
                row_count: row_count.max(0) as u64,
            });
        }
        Ok(tables)
    }

    fn query(&mut self, sql: &str, row_cap: usize, deadline: Duration) -> Result<RawResult, SqlError> {
        let handle = self.conn.get_interrupt_handle();
        let (done_tx, done_rx) = mpsc::channel::<()>();
        let fired = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let fired_watch = Arc::clone(&fired);
        let watchdog = std::thread::spawn(move || {
            if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(deadline) {
                fired_watch.store(true, std::sync::atomic::Ordering::SeqCst);
                handle.interrupt();
            }
        });

        let result = self.run_query(sql, row_cap);
        let _ = done_tx.send(());
        let _ = watchdog.join();
        match result {
            Err(_) if fired.load(std::sync::atomic::Ordering::SeqCst) => Err(SqlError::ExecutionTimeout),
            Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == rusqlite::ErrorCode::OperationInterrupted => {
                Err(SqlError::ExecutionTimeout)
            }
            Err(e) => Err(failed(e)),
            Ok(raw) => Ok(raw),
        }
    }
}

impl SqliteConnection {
    fn sample_values(&self, sql: &str) -> Result<Vec<String>, SqlError> {
        let mut stmt = self.conn.prepare(sql).map_err(failed)?;
        let mut rows = stmt.query([]).map_err(failed)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next().map_err(failed)? {
            out.push(value_from_ref(row.get_ref(0).map_err(failed)?).to_string());
        }
        Ok(out)
    }

    fn run_query(&self, sql: &str, row_cap: usize) -> Result<RawResult, rusqlite::Error> {
        let mut stmt = self.conn.prepare(sql)?;
        if !stmt.readonly() {
            return Err(rusqlite::Error::InvalidQuery);
        }
        let columns: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
        let declared_types: Vec<Option<String>> =
            stmt.columns().iter().map(|c| c.decl_type().map(String::from)).collect();
        let width = columns.len();
        let mut rows_out = Vec::new();
        let mut capped = false;
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            if rows_out.len() == row_cap {
                capped = true;
                break;
            }
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                values.push(value_from_ref(row.get_ref(i)?));
            }
            rows_out.push(values);
        }
        Ok(RawResult { columns, declared_types, rows: rows_out, capped })
    }
}

type Idle = HashMap<ConnectionConfig, Vec<Box<dyn SqlConnection>>>;

/// Dialect registry plus a pool of idle connections keyed by config.
///
/// A checked-out connection serves one statement at a time and returns to
/// the pool when the guard drops.
pub struct Connector {
    adapters: HashMap<Dialect, Arc<dyn DialectAdapter>>,
    idle: Arc<Mutex<Idle>>,
}

impl Default for Connector {
    fn default() -> Self {
        let mut adapters: HashMap<Dialect, Arc<dyn DialectAdapter>> = HashMap::new();
        adapters.insert(Dialect::Embedded, Arc::new(EmbeddedAdapter));
        for d in [Dialect::Mysql, Dialect::Postgresql, Dialect::Mariadb, Dialect::Mssql, Dialect::Oracle] {
            adapters.insert(d, Arc::new(ServerAdapter::new(d)));
        }
        Self { adapters, idle: Arc::new(Mutex::new(HashMap::new())) }
    }
}

impl std::fmt::Debug for Connector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut dialects: Vec<_> = self.adapters.keys().collect();
        dialects.sort();
        f.debug_struct("Connector").field("dialects", &dialects).finish()
    }
}

impl Connector {
    pub fn with_adapter(mut self, adapter: Arc<dyn DialectAdapter>) -> Self {
        self.adapters.insert(adapter.dialect(), adapter);
        self
    }

    pub fn adapter(&self, dialect: Dialect) -> Arc<dyn DialectAdapter> {
        self.adapters
            .get(&dialect)
            .cloned()
            .unwrap_or_else(|| Arc::new(ServerAdapter::new(dialect)))
    }

    pub fn checkout(&self, config: &ConnectionConfig) -> Result<PooledConnection, SqlError> {
        if !config.read_only {
            return Err(SqlError::WriteAccessRequested);
        }
        let reused = self
            .idle
            .lock()
            .map_err(|_| SqlError::ConnectionFailed("connection pool poisoned".into()))?
            .get_mut(config)
            .and_then(Vec::pop);
        let conn = match reused {
            Some(c) => c,
            None => self.adapter(config.dialect).open(config)?,
        };
        Ok(PooledConnection { conn: Some(conn), key: config.clone(), idle: Arc::clone(&self.idle) })
    }

    /// Drops every pooled connection for `config`.
    pub fn evict(&self, config: &ConnectionConfig) {
        if let Ok(mut idle) = self.idle.lock() {
            idle.remove(config);
        }
    }
}

pub struct PooledConnection {
    conn: Option<Box<dyn SqlConnection>>,
    key: ConnectionConfig,
    idle: Arc<Mutex<Idle>>,
}

impl std::ops::Deref for PooledConnection {
    type Target = dyn SqlConnection;
    fn deref(&self) -> &Self::Target {
        self.conn.as_deref().expect("connection present until drop")
    }
}

impl std::ops::DerefMut for PooledConnection {
    fn deref_mut(&mut self) -> &mut Self::Target {
        self.conn.as_deref_mut().expect("connection present until drop")
    }
}

impl Drop for PooledConnection {
    fn drop(&mut self) {
        if let (Some(conn), Ok(mut idle)) = (self.conn.take(), self.idle.lock()) {
            idle.entry(self.key.clone()).or_default().push(conn);
        }
    }
}
