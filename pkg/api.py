"""
HVD Flow FastAPI server entry point

    uvicorn api:app --port 8000
    python api.py            (port from $HVDFLOW_PORT, default 8000)
"""
import os

from dotenv import load_dotenv

from src.api.server import app
from src.logging_setup import configure_logging

load_dotenv()

__all__ = ["app"]


if __name__ == "__main__":
    import uvicorn

    configure_logging()
    uvicorn.run(app, host="0.0.0.0", port=int(os.getenv("HVDFLOW_PORT", "8000")))
