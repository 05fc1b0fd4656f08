export { RngStream, splitmix64Word } from './rng';
export {
  DecodeError,
  WireImage,
  decodeRequest,
  encodeResponse,
  encodeErrorResponse,
  bestEffortId,
  formatProb,
} from './wire';
export { encodeSaliency, decodeSaliency } from './salm';
export {
  ServedModel,
  EchoModel,
  ConstantModel,
  TinyConvModel,
  ConvForward,
  parseModelSpec,
} from './models';
export {
  SaliencyTool,
  bilinearUpsample,
  gradCam,
  inputGradient,
  xraiSaliency,
  exportSaliency,
} from './gradcam';
export { handleRequest, createHttpServer, createTcpServer, DEFAULT_BATCH_LIMIT } from './serve';
export { loadPng } from './png';
