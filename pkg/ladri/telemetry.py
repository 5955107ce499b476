import functools
import logging
import os
import time
import typing

from opentelemetry import _logs
from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc._log_exporter import OTLPLogExporter
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk._logs import LoggerProvider, LoggingHandler, LogData
from opentelemetry.sdk._logs.export import (
	BatchLogRecordProcessor,
	LogExporter,
	LogExportResult,
	SimpleLogRecordProcessor,
)
from opentelemetry.sdk.resources import SERVICE_NAME, Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import (
	BatchSpanProcessor,
	SimpleSpanProcessor,
	SpanExporter,
	SpanExportResult,
)

from ladri.consts import (
	ENV_OTEL_ENDPOINT,
	ENV_TRACES_FILE,
	LIVE_LOGS_FILE_PATH,
	LOCAL_TRACES_FILE,
	SERVICE_NAME_VALUE,
	STAGE_ATTRIBUTE,
)
from ladri.util import get_environ_vars, _is_endpoint_reachable

_telemetry_instance = None

logger = logging.getLogger(__name__)

tracer = trace.get_tracer(__name__)


class Telemetry:
	def __init__(
		self,
		write_to_file: bool = False,
		traces_file: str = None,
		otel_collector_endpoint: str = None,
		skip_reachability_check: bool = False,
	):
		"""
		Wires OpenTelemetry tracing and log export for a pipeline run.

		Args:
			write_to_file (bool): If True, appends spans as JSON lines to `traces_file`.
			traces_file (str): Span output file. Defaults to LADRI_TRACES_FILE or ladri_traces.json.
			otel_collector_endpoint (str): OTLP gRPC collector. Defaults to LADRI_OTEL_ENDPOINT.
			skip_reachability_check (bool): Export to the collector without probing it first.

		Behavior:
			- A second construction reuses the first instance's configuration.
			- With a collector endpoint, spans and logs go to OTLP once the endpoint answers;
			  an unreachable collector logs a warning and leaves the collector exporters off.
			- If LADRI_LIVE_LOGS_FILE names a file in an existing directory, log records are
			  also appended to it as JSON lines.
		"""
		start_time = time.time()

		global _telemetry_instance

		if _telemetry_instance is not None:
			logger.warning("[LADRI] Telemetry already initialized; ignoring re-initialization (new configuration will not be applied).")
			self.__dict__.update(_telemetry_instance.__dict__)
			return

		self.config = get_environ_vars()
		self.resource = Resource.create({**self.config, SERVICE_NAME: SERVICE_NAME_VALUE})
		self.tracer_provider = TracerProvider(resource=self.resource)
		self.log_provider = LoggerProvider(resource=self.resource)
		self.exporters = []

		if otel_collector_endpoint is None:
			otel_collector_endpoint = os.getenv(ENV_OTEL_ENDPOINT) or None
		if traces_file is None:
			traces_file = os.getenv(ENV_TRACES_FILE) or None
		write_to_file = write_to_file or traces_file is not None

		if write_to_file:
			traces_file = traces_file or LOCAL_TRACES_FILE
			logger.info(f"[LADRI] Writing traces to file: {traces_file}")
			exporter = FileSpanExporter(traces_file)
			self.tracer_provider.add_span_processor(SimpleSpanProcessor(exporter))
			self.exporters.append(exporter)

		if otel_collector_endpoint is not None:
			is_reachable = True
			if not skip_reachability_check:
				is_reachable = _is_endpoint_reachable(otel_collector_endpoint, retry_enabled=True)
				logger.info(f"[LADRI] OTel collector endpoint reachability: {is_reachable}")
			if is_reachable:
				self.tracer_provider.add_span_processor(
					BatchSpanProcessor(OTLPSpanExporter(endpoint=otel_collector_endpoint, insecure=True))
				)
				self.log_provider.add_log_record_processor(
					BatchLogRecordProcessor(OTLPLogExporter(endpoint=otel_collector_endpoint, insecure=True))
				)
			else:
				logger.warning(f"[LADRI] OTel collector endpoint {otel_collector_endpoint} is not reachable; spans stay local.")

		jsonl_file_exporter = get_jsonl_file_exporter()
		if jsonl_file_exporter is not None:
			self.log_provider.add_log_record_processor(SimpleLogRecordProcessor(jsonl_file_exporter))
			self.exporters.append(jsonl_file_exporter)

		trace.set_tracer_provider(self.tracer_provider)
		_logs.set_logger_provider(self.log_provider)

		"""
			Both the logger and the handler filter by level: the handler accepts DEBUG and above,
			the root logger's own level (set by the CLI from LADRI_LOG_LEVEL) decides what reaches it.
		"""
		self.handler = LoggingHandler(level=logging.DEBUG, logger_provider=self.log_provider)
		logging.root.addHandler(self.handler)

		_telemetry_instance = self
		logger.info(f"[LADRI] Telemetry initialized in {time.time() - start_time:.2f} seconds.")

	def shutdown(self):
		"""Flushes exporters and detaches the logging bridge."""
		global _telemetry_instance
		logging.root.removeHandler(self.handler)
		self.tracer_provider.shutdown()
		self.log_provider.shutdown()
		if _telemetry_instance is self:
			_telemetry_instance = None


def traced_function(func):
	"""
	Wraps a pipeline stage in a span named after the function. Spans are no-ops until
	a Telemetry instance installs a tracer provider.
	"""
	@functools.wraps(func)
	def wrapper(*args, **kwargs):
		with trace.get_tracer(func.__module__).start_as_current_span(func.__name__) as span:
			span.set_attribute(STAGE_ATTRIBUTE, func.__name__)
			return func(*args, **kwargs)
	return wrapper


class FileSpanExporter(SpanExporter):
	def __init__(self, file_name):
		self.file_name = file_name

	def export(self, spans):
		with open(self.file_name, "a") as f:
			for span in spans:
				f.write(span.to_json(indent=None) + "\n")
		return SpanExportResult.SUCCESS

	def shutdown(self):
		pass


def get_jsonl_log_file_path():
	"""
	Gets the filename for live logs from env vars
	"""
	return os.getenv(LIVE_LOGS_FILE_PATH)


def get_jsonl_file_exporter():
	"""
	get json log exporter if env var exists and parent directory exists
	"""
	jsonl_log_file_path = get_jsonl_log_file_path()
	if jsonl_log_file_path and os.path.isdir(os.path.dirname(os.path.abspath(jsonl_log_file_path))):
		logger.debug(f"[LADRI] Logging to file: {jsonl_log_file_path}")
		return JSONLFileLogExporter(jsonl_log_file_path)
	logger.debug("[LADRI] No JSON log file provided. Skipping JSON log export.")
	return None


class JSONLFileLogExporter(LogExporter):
	def __init__(self, file_path):
		self.file_path = file_path
		try:
			self.f = open(self.file_path, 'a', encoding='utf-8')
		except OSError as e:
			logger.error(f"[LADRI] Failed to open file {self.file_path}: {e}")
			self.f = None

	def export(self, batch: typing.Sequence[LogData]) -> LogExportResult:
		if self.f is None:
			return LogExportResult.FAILURE
		try:
			for r in batch:
				self.f.write(r.log_record.to_json(None) + '\n')
				self.f.flush()
			return LogExportResult.SUCCESS
		except (OSError, ValueError) as e:
			logger.error(f"[LADRI] Failed to write to file {self.file_path}: {e}")
			return LogExportResult.FAILURE

	def shutdown(self):
		if self.f:
			self.f.close()
			self.f = None
