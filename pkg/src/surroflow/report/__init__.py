"""Run consolidation: schema-validated report document, summary, figures."""

from surroflow.report.consolidate import (REPORT_FORMAT, audit_digest,
                                          consolidate, validate_report)
from surroflow.report.render import render_summary

__all__ = ["REPORT_FORMAT", "audit_digest", "consolidate", "validate_report",
           "render_summary"]
