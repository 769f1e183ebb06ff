// Binary (P6) portable pixmap decoding for canvas rendering.

export interface PpmImage {
  width: number;
  height: number;
  /** RGBA, row-major, alpha forced to 255 - ready for ImageData. */
  rgba: Uint8ClampedArray;
}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

function nextToken(data: Uint8Array, pos: number): [string, number] {
  const n = data.length;
  while (pos < n) {
    if (data[pos] === 0x23) {
      // '#' comment runs to end of line
      while (pos < n && data[pos] !== 0x0a) pos++;
    } else if (WHITESPACE.has(data[pos])) {
      pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < n && !WHITESPACE.has(data[pos])) pos++;
  if (start === pos) throw new Error("ppm: unexpected end of header");
  let token = "";
  for (let i = start; i < pos; i++) token += String.fromCharCode(data[i]);
  return [token, pos];
}

export function parsePpm(data: Uint8Array): PpmImage {
  let pos = 0;
  let magic: string;
  [magic, pos] = nextToken(data, pos);
  if (magic !== "P6") throw new Error(`ppm: expected P6, got ${magic}`);
  const fields: number[] = [];
  for (const name of ["width", "height", "maxval"]) {
    let token: string;
    [token, pos] = nextToken(data, pos);
    const value = Number(token);
    if (!Number.isInteger(value)) throw new Error(`ppm: non-numeric ${name}`);
    fields.push(value);
  }
  const [width, height, maxval] = fields;
  if (width <= 0 || height <= 0) throw new Error(`ppm: bad dimensions ${width}x${height}`);
  if (maxval !== 255) throw new Error(`ppm: unsupported maxval ${maxval}`);
  if (pos >= data.length || !WHITESPACE.has(data[pos])) {
    throw new Error("ppm: missing separator before pixel data");
  }
  pos += 1;
  const need = width * height * 3;
  if (data.length - pos < need) {
    throw new Error(`ppm: truncated pixel data (need ${need}, have ${data.length - pos})`);
  }
  const rgba = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    rgba[i * 4] = data[pos + i * 3];
    rgba[i * 4 + 1] = data[pos + i * 3 + 1];
    rgba[i * 4 + 2] = data[pos + i * 3 + 2];
    rgba[i * 4 + 3] = 255;
  }
  return { width, height, rgba };
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}
