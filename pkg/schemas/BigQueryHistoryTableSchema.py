from google.cloud import bigquery

# Definition for the archive table schema - used for table creation
# SchemaField docs - https://cloud.google.com/python/docs/reference/bigquery/latest/google.cloud.bigquery.schema.SchemaField
schema = [
    bigquery.SchemaField("entity_id", "STRING", mode="REQUIRED"),
    bigquery.SchemaField("entity_type", "STRING", mode="REQUIRED"),
    bigquery.SchemaField("attribute", "STRING", mode="REQUIRED"),
    bigquery.SchemaField("t", "TIMESTAMP", mode="REQUIRED"),
    bigquery.SchemaField("value", "JSON", mode="NULLABLE"),
    bigquery.SchemaField("metadata", "JSON", mode="REQUIRED"),
    bigquery.SchemaField("record_key", "STRING", mode="REQUIRED"),
]
