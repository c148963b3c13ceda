"""crossalarm App"""

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware

from crossalarm import models
from crossalarm.routers.alarms import router as alarms_router
from crossalarm.version import __version__

DESCRIPTION = """
Stuck-pipe early warning arithmetic: warning thresholds, normal-window
statistics and alarm intervals over a Risk series.
"""

app = FastAPI(
    title="crossalarm",
    description=DESCRIPTION,
    version=__version__,
    license_info={
        "name": "The MIT License (MIT)",
        "url": "https://mit-license.org/",
    },
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(
    alarms_router.router,
    prefix="/api/v1/alarms",
    tags=["Alarms"],
)


ALARM_LINKS = [
    ("warning-threshold", "Warning threshold", "warning_threshold"),
    ("normal-stats", "Normal window statistics", "normal_stats"),
    ("detect", "Alarm detection", "detect"),
]


@app.get("/api/v1/", response_model=models.Landing)
def landing_page(request: Request):
    url = str(request.base_url)
    links = [
        {
            "rel": "service-desc",
            "type": "application/vnd.oai.openapi+json;version=3.0",
            "title": "The OpenAPI definition as JSON",
            "href": f"{url}openapi.json",
        }
    ]
    links += [
        {"rel": rel, "type": "application/json", "title": title, "href": f"{url}api/v1/alarms/{path}"}
        for rel, title, path in ALARM_LINKS
    ]

    return {"links": links, "title": "crossalarm"}


@app.get(
    "/api/v1/health_check", tags=["Health"], response_model=models.HealthCheckResponse
)
async def health():
    """
    Method used to verify server is healthy.
    """

    return {"status": "UP"}
