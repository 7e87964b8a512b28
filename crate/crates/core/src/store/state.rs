//! Embedded transactional keyspace under `state/`.

use std::path::Path;

use redb::{Database, ReadableDatabase, ReadableTable, TableDefinition};

use super::snapshot::Snapshot;
use super::StoreError;
use crate::scoring::BotScore;

const SCORES: TableDefinition<&str, &[u8]> = TableDefinition::new("scores");
const UNSCORABLE: TableDefinition<&str, u8> = TableDefinition::new("unscorable");
const META: TableDefinition<&str, u64> = TableDefinition::new("meta");
const SNAPSHOTS: TableDefinition<&str, &[u8]> = TableDefinition::new("snapshots");

const LAST_SNAPSHOT_ID: &str = "last_snapshot_id";
const LATEST: &str = "latest";

fn db_err(e: impl Into<redb::Error>) -> StoreError {
    StoreError::State(e.into())
}

#[derive(Debug)]
pub(crate) struct StateDb {
    db: Database,
}

impl StateDb {
    pub(crate) fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let db = Database::create(dir.join("state.redb")).map_err(db_err)?;
        let txn = db.begin_write().map_err(db_err)?;
        {
            txn.open_table(SCORES).map_err(db_err)?;
            txn.open_table(UNSCORABLE).map_err(db_err)?;
            txn.open_table(META).map_err(db_err)?;
            txn.open_table(SNAPSHOTS).map_err(db_err)?;
        }
        txn.commit().map_err(db_err)?;
        Ok(Self { db })
    }

    pub(crate) fn put_score(&self, score: &BotScore) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(score)?;
        let txn = self.db.begin_write().map_err(db_err)?;
        {
            let mut scores = txn.open_table(SCORES).map_err(db_err)?;
            scores.insert(score.account_id.as_str(), bytes.as_slice()).map_err(db_err)?;
            let mut gone = txn.open_table(UNSCORABLE).map_err(db_err)?;
            gone.remove(score.account_id.as_str()).map_err(db_err)?;
        }
        txn.commit().map_err(db_err)
    }

    pub(crate) fn put_unscorable(&self, account_id: &str) -> Result<(), StoreError> {
        let txn = self.db.begin_write().map_err(db_err)?;
        {
            let mut gone = txn.open_table(UNSCORABLE).map_err(db_err)?;
            gone.insert(account_id, 1u8).map_err(db_err)?;
            let mut scores = txn.open_table(SCORES).map_err(db_err)?;
            scores.remove(account_id).map_err(db_err)?;
        }
        txn.commit().map_err(db_err)
    }

    pub(crate) fn scores(&self) -> Result<Vec<BotScore>, StoreError> {
        let txn = self.db.begin_read().map_err(db_err)?;
        let table = txn.open_table(SCORES).map_err(db_err)?;
        let mut out = Vec::new();
        for row in table.iter().map_err(db_err)? {
            let (_, v) = row.map_err(db_err)?;
            out.push(serde_json::from_slice(v.value())?);
        }
        Ok(out)
    }

    pub(crate) fn unscorable(&self) -> Result<Vec<String>, StoreError> {
        let txn = self.db.begin_read().map_err(db_err)?;
        let table = txn.open_table(UNSCORABLE).map_err(db_err)?;
        let mut out = Vec::new();
        for row in table.iter().map_err(db_err)? {
            let (k, _) = row.map_err(db_err)?;
            out.push(k.value().to_string());
        }
        Ok(out)
    }

    pub(crate) fn last_snapshot_id(&self) -> Result<u64, StoreError> {
        let txn = self.db.begin_read().map_err(db_err)?;
        let table = txn.open_table(META).map_err(db_err)?;
        Ok(table.get(LAST_SNAPSHOT_ID).map_err(db_err)?.map(|v| v.value()).unwrap_or(0))
    }

    /// Stores the snapshot and advances the id counter in one transaction.
    pub(crate) fn put_snapshot(&self, snapshot: &Snapshot) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec(snapshot)?;
        let txn = self.db.begin_write().map_err(db_err)?;
        {
            let mut meta = txn.open_table(META).map_err(db_err)?;
            let last = meta.get(LAST_SNAPSHOT_ID).map_err(db_err)?.map(|v| v.value()).unwrap_or(0);
            if snapshot.snapshot_id <= last {
                return Err(StoreError::StaleSnapshotId { id: snapshot.snapshot_id, last });
            }
            meta.insert(LAST_SNAPSHOT_ID, snapshot.snapshot_id).map_err(db_err)?;
            let mut snaps = txn.open_table(SNAPSHOTS).map_err(db_err)?;
            snaps.insert(LATEST, bytes.as_slice()).map_err(db_err)?;
        }
        txn.commit().map_err(db_err)
    }

    pub(crate) fn latest_snapshot(&self) -> Result<Option<Snapshot>, StoreError> {
        let txn = self.db.begin_read().map_err(db_err)?;
        let table = txn.open_table(SNAPSHOTS).map_err(db_err)?;
        match table.get(LATEST).map_err(db_err)? {
            Some(v) => Ok(Some(serde_json::from_slice(v.value())?)),
            None => Ok(None),
        }
    }
}
