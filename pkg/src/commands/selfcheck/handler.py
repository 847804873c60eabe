# src/commands/selfcheck/handler.py
"""Command: run the fast property checks of the numerical core."""

import json
import logging

from common.events import STATUS_FAILED, STATUS_OK, log_level
from cul import selfcheck

# Configure logging
logger = logging.getLogger()
logger.setLevel(log_level())


def respond(status, body):
    return {"statusCode": status, "body": json.dumps(body)}


def handler(event, context=None):
    """Status 0 only when every check passes; the body lists each check's result."""
    logger.debug(f"Event received: {json.dumps(event)}")

    try:
        results = selfcheck.run_all()
        failed = [r["check"] for r in results if not r["passed"]]
        response = {"passed": not failed, "failed": failed, "checks": results}
        if failed:
            logger.warning(f"Self-check failed: {failed}")
            return respond(STATUS_FAILED, response)
        logger.debug(f"Returning successful response: {json.dumps(response)}")
        return respond(STATUS_OK, response)

    except Exception as e:
        logger.error(f"Unhandled error: {str(e)}", exc_info=True)
        return respond(STATUS_FAILED, {"error": str(e)})
