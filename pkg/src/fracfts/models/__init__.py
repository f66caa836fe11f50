from .system import EtaSearch, FtsQuery, SystemSpec
from .result_models import Certificate, CertificateStatus, EtaSweep, PicardLog, VerifyReport
from .config_models import RunConfig

__all__ = [
    "SystemSpec",
    "FtsQuery",
    "EtaSearch",
    "Certificate",
    "CertificateStatus",
    "EtaSweep",
    "PicardLog",
    "VerifyReport",
    "RunConfig",
]
