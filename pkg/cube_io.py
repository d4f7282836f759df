"""
数据立方体模块
负责高光谱数据立方体的数据结构、.hyrs二进制容器读写以及PGM导入导出
"""
import os
import csv
import glob
import struct
import logging
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from errors import CubeFormatError, CubeCorruptionError, ValidationError


logger = logging.getLogger('HyReS.CubeIO')

MAGIC = b'HYRS'
VERSION = 1
# magic, version, width, height, channel count, pixel size
HEADER = struct.Struct('<4sBIIId')


class ChannelImage:
    """单通道强度图像 - 构造后只读"""
    __slots__ = ('height', 'width', '_pixels')

    def __init__(self, pixels):
        array = np.array(pixels, dtype=np.float64, copy=True)
        if array.ndim != 2:
            raise ValidationError(f"通道图像必须是二维数组，实际维度: {array.ndim}")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValidationError(f"通道图像尺寸无效: {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValidationError("通道图像包含NaN或Inf")
        array.setflags(write=False)
        self.height, self.width = array.shape
        self._pixels = array

    @classmethod
    def from_flat(cls, height, width, data):
        """由行优先的一维数据构造图像"""
        flat = np.asarray(data, dtype=np.float64)
        if flat.size != height * width:
            raise ValidationError(f"数据长度 {flat.size} 与尺寸 {height}x{width} 不符")
        return cls(flat.reshape(height, width))

    @property
    def pixels(self):
        """二维只读像素数组"""
        return self._pixels

    @property
    def data(self):
        """行优先的一维只读视图"""
        return self._pixels.ravel()

    @property
    def shape(self):
        return self.height, self.width

    def __eq__(self, other):
        if not isinstance(other, ChannelImage):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._pixels, other._pixels)

    __hash__ = None

    def __repr__(self):
        return f"ChannelImage({self.height}x{self.width})"


class SpectralCube:
    """高光谱数据立方体：同尺寸通道序列 + 像素尺寸 + 每通道m/z标签"""
    __slots__ = ('channels', 'pixel_size_um', 'labels')

    def __init__(self, channels: Sequence[ChannelImage], pixel_size_um, labels):
        channels = tuple(ch if isinstance(ch, ChannelImage) else ChannelImage(ch) for ch in channels)
        labels = tuple(float(v) for v in labels)
        if not channels:
            raise ValidationError("数据立方体至少需要一个通道")
        shape = channels[0].shape
        for index, channel in enumerate(channels):
            if channel.shape != shape:
                raise ValidationError(f"通道 {index} 尺寸 {channel.shape} 与通道 0 尺寸 {shape} 不一致")
        if len(labels) != len(channels):
            raise ValidationError(f"标签数量 ({len(labels)}) 与通道数量 ({len(channels)}) 不一致")
        if not all(np.isfinite(labels)):
            raise ValidationError("标签包含NaN或Inf")
        if any(b <= a for a, b in zip(labels, labels[1:])):
            raise ValidationError("m/z标签必须严格递增")
        pixel_size_um = float(pixel_size_um)
        if not (np.isfinite(pixel_size_um) and pixel_size_um > 0):
            raise ValidationError(f"像素尺寸 ({pixel_size_um}) 必须为正数")
        self.channels = channels
        self.pixel_size_um = pixel_size_um
        self.labels = labels

    @classmethod
    def from_array(cls, stack, pixel_size_um, labels):
        """由 (C, H, W) 数组构造立方体"""
        stack = np.asarray(stack, dtype=np.float64)
        if stack.ndim != 3:
            raise ValidationError(f"立方体数组必须是三维 (C,H,W)，实际维度: {stack.ndim}")
        return cls([ChannelImage(plane) for plane in stack], pixel_size_um, labels)

    @property
    def height(self):
        return self.channels[0].height

    @property
    def width(self):
        return self.channels[0].width

    def __len__(self):
        return len(self.channels)

    def as_array(self):
        """返回 (C, H, W) 的float64数组副本"""
        return np.stack([ch.pixels for ch in self.channels])

    def replace(self, channels=None, pixel_size_um=None, labels=None):
        """返回替换部分字段后的新立方体"""
        return SpectralCube(
            self.channels if channels is None else channels,
            self.pixel_size_um if pixel_size_um is None else pixel_size_um,
            self.labels if labels is None else labels,
        )

    def select(self, indices):
        """按索引选取通道（保持标签顺序）"""
        indices = sorted(int(i) for i in indices)
        return SpectralCube([self.channels[i] for i in indices], self.pixel_size_um,
                            [self.labels[i] for i in indices])

    def __repr__(self):
        return (f"SpectralCube({len(self)}x{self.height}x{self.width}, "
                f"pixel={self.pixel_size_um}um)")


class CubeManifest:
    """目录导入清单"""
    __slots__ = ('pixel_size_um', 'label_source', 'files')

    def __init__(self, pixel_size_um, label_source, files):
        self.pixel_size_um = float(pixel_size_um)
        self.label_source = label_source
        self.files = list(files)

    @classmethod
    def from_directory(cls, directory, label_source, pixel_size_um):
        """
        按文件名排序收集目录下的PGM文件

        Args:
            directory: PGM文件所在目录
            label_source: 标签文件路径（每行一个m/z）
            pixel_size_um: 像素尺寸（微米）
        """
        if not os.path.isdir(directory):
            raise FileNotFoundError(f"导入目录不存在: {directory}")
        files = sorted(glob.glob(os.path.join(directory, '*.pgm')))
        return cls(pixel_size_um, label_source, files)

    def read_labels(self):
        """读取标签文件，支持换行或逗号分隔"""
        if not os.path.isfile(self.label_source):
            raise FileNotFoundError(f"标签文件不存在: {self.label_source}")
        with open(self.label_source, 'r', encoding='utf-8') as f:
            text = f.read()
        tokens = [t for t in text.replace(',', '\n').split() if t and not t.startswith('#')]
        try:
            return [float(t) for t in tokens]
        except ValueError as e:
            raise ValidationError(f"标签文件格式错误: {self.label_source}, {e}")

    def validate(self):
        """检查文件数量与标签数量一致"""
        labels = self.read_labels()
        if len(labels) != len(self.files):
            raise ValidationError(f"文件数量 ({len(self.files)}) 与标签数量 ({len(labels)}) 不一致")
        return labels


def write_cube(cube: SpectralCube, path):
    """
    写出.hyrs容器（小端，float32负载，通道优先）

    Args:
        cube: 数据立方体
        path: 目标文件路径
    """
    if not isinstance(cube, SpectralCube):
        raise ValidationError("write_cube需要SpectralCube实例")
    header = HEADER.pack(MAGIC, VERSION, cube.width, cube.height, len(cube), cube.pixel_size_um)
    labels = np.asarray(cube.labels, dtype='<f8').tobytes()
    payload = cube.as_array().astype('<f4').tobytes()
    with open(path, 'wb') as f:
        f.write(header)
        f.write(labels)
        f.write(payload)
    logger.debug(f"写出数据立方体: {path} ({len(cube)} 通道, {cube.height}x{cube.width})")


def read_cube(path) -> SpectralCube:
    """
    读取.hyrs容器

    Args:
        path: 容器文件路径

    Returns:
        SpectralCube
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"数据立方体文件不存在: {path}")
    with open(path, 'rb') as f:
        raw = f.read()

    if raw[:4] != MAGIC:
        raise CubeFormatError(f"文件头魔数错误: {path} ({raw[:4]!r})")
    if len(raw) < HEADER.size:
        raise CubeCorruptionError(f"文件头不完整: {path}")
    _, version, width, height, count, pixel_size = HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise CubeFormatError(f"不支持的容器版本 {version}: {path}")
    if width < 1 or height < 1 or count < 1:
        raise ValidationError(f"容器尺寸无效: {count}x{height}x{width}")

    expected = HEADER.size + 8 * count + 4 * count * height * width
    if len(raw) != expected:
        raise CubeCorruptionError(f"容器长度 {len(raw)} 与声明的 {count}x{height}x{width} 不符 (应为 {expected}): {path}")

    labels = np.frombuffer(raw, dtype='<f8', count=count, offset=HEADER.size)
    payload = np.frombuffer(raw, dtype='<f4', offset=HEADER.size + 8 * count)
    stack = payload.reshape(count, height, width).astype(np.float64)
    cube = SpectralCube.from_array(stack, pixel_size, labels.tolist())
    logger.info(f"读取数据立方体: {path} ({count} 通道, {height}x{width}, 像素 {pixel_size} um)")
    return cube


def read_pgm(path):
    """
    读取二进制P5格式PGM

    Returns:
        (二维数组, 格式最大值255或65535)
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"图像文件不存在: {path}")
    with open(path, 'rb') as f:
        magic = f.read(2)
    if magic != b'P5':
        raise ValidationError(f"不支持的图像格式（仅支持二进制P5灰度PGM）: {path}")
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == 'L':
                format_max = 255
            elif img.mode in ('I', 'I;16', 'I;16B'):
                format_max = 65535
            else:
                raise ValidationError(f"不支持的PGM像素模式 {img.mode}: {path}")
            array = np.asarray(img, dtype=np.float64)
    except (Image.UnidentifiedImageError, SyntaxError) as e:
        raise ValidationError(f"图像格式错误或损坏: {path}, 错误: {e}")
    return array, format_max


def import_channels(manifest: CubeManifest) -> SpectralCube:
    """
    按清单顺序导入PGM通道并线性归一化到[0,1]

    Args:
        manifest: 导入清单

    Returns:
        SpectralCube
    """
    labels = manifest.validate()
    channels = []
    shape = None
    for path in manifest.files:
        array, format_max = read_pgm(path)
        if shape is None:
            shape = array.shape
        elif array.shape != shape:
            raise ValidationError(f"图像尺寸不一致: {path} 为 {array.shape[0]}x{array.shape[1]}，"
                                  f"首个文件为 {shape[0]}x{shape[1]}")
        channels.append(ChannelImage(array / format_max))
    logger.info(f"导入 {len(channels)} 个通道")
    return SpectralCube(channels, manifest.pixel_size_um, labels)


def to_uint16(values):
    """按四舍五入（远离零）把[0,1]强度量化为16位"""
    scaled = np.asarray(values, dtype=np.float64) * 65535.0
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, 0, 65535).astype(np.uint16)


def write_pgm16(array, path):
    """写出16位二进制PGM"""
    img = Image.fromarray(to_uint16(array).astype(np.int32))  # int32 -> 模式I，保存为16位P5
    img.save(path, format='PPM')


def export_channel(cube: SpectralCube, index, path, write_csv=False):
    """
    导出单个通道为16位PGM，可选同名CSV原始数据

    Args:
        cube: 数据立方体
        index: 通道索引
        path: PGM输出路径
        write_csv: 是否同时写出CSV
    """
    if not 0 <= index < len(cube):
        raise IndexError(f"通道索引 {index} 超出范围 (0-{len(cube) - 1})")
    pixels = cube.channels[index].pixels
    write_pgm16(pixels, path)
    if write_csv:
        csv_path = os.path.splitext(path)[0] + '.csv'
        with open(csv_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['row', 'col', 'value'])
            for (row, col), value in np.ndenumerate(pixels):
                writer.writerow([row, col, '%.17g' % value])
    logger.info(f"导出通道 {index} (m/z {cube.labels[index]}): {path}")


def describe_cube(cube: SpectralCube, path: Optional[str] = None):
    """汇总立方体基本信息，用于info子命令"""
    stack = cube.as_array()
    return {
        'path': path,
        'channels': len(cube),
        'height': cube.height,
        'width': cube.width,
        'pixel_size_um': cube.pixel_size_um,
        'mz_min': cube.labels[0],
        'mz_max': cube.labels[-1],
        'intensity_min': float(stack.min()),
        'intensity_max': float(stack.max()),
        'intensity_mean': float(stack.mean()),
    }
