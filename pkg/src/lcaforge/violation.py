from __future__ import annotations

from dataclasses import dataclass, field

RULE_CODES = (
    "UNIT_CONSISTENCY",
    "RANGE_CHECK",
    "TYPE_SAFETY",
    "MANDATORY_PARAMS",
    "TAXONOMY_GRAMMAR",
    "SCOPE_TEMPORAL",
    "SCOPE_GEOGRAPHIC",
    "SCOPE_TECHNOLOGICAL",
    "SCOPE_OPERATING_RANGE",
    "ALLOCATION_SUM",
    "MASS_BALANCE",
    "SHORTCUT_CONSISTENCY",
    "CYCLE_STRUCTURAL",
    "ADVISORY_TAINT",
)


@dataclass
class Violation:
    rule_code: str
    message: str
    model_id: str = ""
    version: str = ""
    path: str = ""
    severity: str = "Error"
    values: dict = field(default_factory=dict)

    def sort_key(self):
        return (self.model_id, self.rule_code, self.path, self.message)

    def to_json(self) -> dict:
        return {
            "rule_code": self.rule_code,
            "severity": self.severity,
            "location": {"model_id": self.model_id, "version": self.version, "path": self.path},
            "message": self.message,
            "values": self.values,
        }

    @classmethod
    def from_json(cls, doc) -> Violation:
        loc = doc.get("location", {})
        return cls(
            rule_code=doc["rule_code"],
            message=doc["message"],
            model_id=loc.get("model_id", ""),
            version=loc.get("version", ""),
            path=loc.get("path", ""),
            severity=doc.get("severity", "Error"),
            values=doc.get("values", {}),
        )
