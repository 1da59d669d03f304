"""Database drivers: a narrow interface over SQL execution.

The core never imports a database library.  :class:`SqliteDriver` uses the
standard library and serves the tests; :class:`PostgresDriver` imports
``psycopg`` only when constructed.
"""

from __future__ import annotations

import sqlite3
from typing import Any

from .ast import BOOL, INT, Database
from .errors import DatabaseError


class DbDriver:
    """Executes SQL text and returns rows as column-name maps."""

    column_types: dict = {}

    def execute(self, sql: str) -> list[dict[str, Any]]:
        raise NotImplementedError

    def ping(self) -> bool:
        try:
            self.execute("SELECT 1 AS one")
        except DatabaseError:
            return False
        return True

    def load(self, db: Database) -> None:
        """Create and fill one table per table of ``db``."""
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "DbDriver":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _ddl(self, db: Database, prefix: str) -> list[tuple[str, str, list[list[Any]]]]:
        out = []
        for ts in db.schema.tables:
            cols = ", ".join(f'"{c}" {self.column_types.get(t, "TEXT")}' for c, t in ts.columns)
            insert = f'INSERT INTO "{ts.name}" VALUES ({", ".join([self.placeholder] * len(ts.columns))})'
            rows = [[r[c] for c in ts.column_names] for r in db.rows(ts.name)]
            out.append((f'{prefix} "{ts.name}" ({cols})', insert, rows))
        return out

    placeholder = "?"


class SqliteDriver(DbDriver):
    """In-process sqlite3; booleans come back as integers and are converted by type."""

    column_types = {INT: "INTEGER", BOOL: "INTEGER"}

    def __init__(self, path: str = ":memory:"):
        try:
            self.conn = sqlite3.connect(path)
        except sqlite3.Error as e:
            raise DatabaseError(str(e)) from e

    def execute(self, sql: str) -> list[dict[str, Any]]:
        try:
            cur = self.conn.execute(sql)
            cols = [d[0] for d in cur.description]
            return [dict(zip(cols, r)) for r in cur.fetchall()]
        except sqlite3.Error as e:
            raise DatabaseError(f"{e}\n{sql}") from e

    def load(self, db: Database) -> None:
        try:
            for create, insert, rows in self._ddl(db, "CREATE TABLE"):
                self.conn.execute(create)
                self.conn.executemany(insert, rows)
            self.conn.commit()
        except sqlite3.Error as e:
            raise DatabaseError(str(e)) from e

    def close(self) -> None:
        self.conn.close()


class PostgresDriver(DbDriver):
    """PostgreSQL through psycopg (the ``postgres`` extra)."""

    column_types = {INT: "BIGINT", BOOL: "BOOLEAN"}
    placeholder = "%s"

    def __init__(self, dsn: str):
        try:
            import psycopg
        except ImportError as e:
            raise DatabaseError("the postgres engine needs psycopg: pip install 'artifact[postgres]'") from e
        self._psycopg = psycopg
        try:
            self.conn = psycopg.connect(dsn, autocommit=True)
        except psycopg.Error as e:
            raise DatabaseError(str(e)) from e

    def execute(self, sql: str) -> list[dict[str, Any]]:
        try:
            with self.conn.cursor() as cur:
                cur.execute(sql)
                cols = [d.name for d in cur.description]
                return [dict(zip(cols, r)) for r in cur.fetchall()]
        except self._psycopg.Error as e:
            raise DatabaseError(f"{e}\n{sql}") from e

    def load(self, db: Database) -> None:
        """Load ``db`` into temporary tables, which shadow permanent ones for this session."""
        try:
            with self.conn.cursor() as cur:
                for create, insert, rows in self._ddl(db, "CREATE TEMPORARY TABLE"):
                    name = create.split('"')[1]
                    cur.execute(f'DROP TABLE IF EXISTS pg_temp."{name}"')
                    cur.execute(create)
                    if rows:
                        cur.executemany(insert, rows)
        except self._psycopg.Error as e:
            raise DatabaseError(str(e)) from e

    def close(self) -> None:
        self.conn.close()
