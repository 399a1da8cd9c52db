import duckdb


def get_conn(db_path: str) -> duckdb.DuckDBPyConnection:
    return duckdb.connect(db_path)


def init_results_table(db_path: str) -> None:
    conn = get_conn(db_path=db_path)

    # One row per trial, shared by every subcommand
    conn.sql(
        """
        CREATE TABLE IF NOT EXISTS "resulttable" (
            schema_version INTEGER,
            run_id VARCHAR,
            subcommand VARCHAR,
            mechanism VARCHAR,
            idc VARCHAR,
            trial INTEGER,
            seed BIGINT,
            vertex_count INTEGER,
            universe_size INTEGER,
            edge_probability FLOAT,
            n FLOAT,
            n2 FLOAT,
            epsilon FLOAT,
            delta FLOAT,
            alpha FLOAT,
            beta FLOAT,
            k INTEGER,
            queries_answered INTEGER,
            max_error FLOAT,
            mean_error FLOAT,
            max_error_bruteforce FLOAT,
            update_count INTEGER,
            update_bound INTEGER,
            exhausted BOOLEAN,
            exit_reason VARCHAR,
            threshold FLOAT,
            sigma FLOAT,
            privacy_epsilon FLOAT,
            privacy_delta FLOAT,
            private BOOLEAN,
            bound_mw FLOAT,
            bound_fk FLOAT,
            bound_mm FLOAT,
            bound_rr FLOAT,
            per_cut_error FLOAT,
            residual_clip FLOAT,
            residual_projected FLOAT,
            residual_true_clip FLOAT,
            residual_true_projected FLOAT,
            residual_true_rounded FLOAT,
            runtime_seconds FLOAT,
            config_json VARCHAR
        );
        """
    )


def init_transcript_table(db_path: str) -> None:
    conn = get_conn(db_path=db_path)

    conn.sql(
        """
        CREATE TABLE IF NOT EXISTS "transcripttable" (
            run_id VARCHAR,
            trial INTEGER,
            position INTEGER,
            kind VARCHAR,
            answer FLOAT,
            query_json VARCHAR
        );
        """
    )
