"""
HyReS 命令行工具 - 主程序
数据导入、退化、训练、复原与FRC/差分PSF/质量评估的可复现命令行入口
"""
import os
import sys
import json
import time
import logging
import argparse
import datetime

import numpy as np

from config_manager import ConfigManager
from errors import HyresError, ValidationError
from path_utils import get_log_dir
from run_manifest import RunHistory, RunManifest


__version__ = "1.0.0"

logger = logging.getLogger('HyReS')


def setup_logging(verbose=False, quiet=False):
    """
    设置日志系统

    Args:
        verbose: 控制台输出DEBUG级别
        quiet: 控制台只输出WARNING及以上
    """
    log_dir = get_log_dir()
    if not os.path.exists(log_dir):
        os.makedirs(log_dir, exist_ok=True)

    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    date_format = '%Y-%m-%d %H:%M:%S'

    root = logging.getLogger('HyReS')
    root.setLevel(logging.DEBUG)
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    # 文件日志
    file_handler = logging.FileHandler(
        os.path.join(log_dir, f'hyres_{datetime.datetime.now().strftime("%Y%m%d")}.log'),
        encoding='utf-8'
    )
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(log_format, datefmt=date_format))

    # 控制台日志
    console_handler = logging.StreamHandler(sys.stderr)
    if verbose:
        console_handler.setLevel(logging.DEBUG)
    elif quiet:
        console_handler.setLevel(logging.WARNING)
    else:
        console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

    root.addHandler(file_handler)
    root.addHandler(console_handler)
    logging.getLogger('PIL').setLevel(logging.WARNING)
    return root


class RunContext:
    """单次运行的上下文：解析后的参数、配置与清单记录"""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.config = ConfigManager(args.config)
        self.config.load()
        self.settings = self.config.get_all()
        self.inputs = {}
        self.outputs = {}
        self.parameters = {}
        self.show_progress = not args.quiet and sys.stderr.isatty()

    def override(self, key, value):
        """命令行参数覆盖配置值"""
        if value is not None:
            self.settings[key] = value
        self.parameters[key] = self.settings[key]
        return self.settings[key]

    def record_output(self, name, path):
        self.outputs[name] = os.path.abspath(path)

    def record_input(self, name, path):
        self.inputs[name] = os.path.abspath(path)


def _require_file(path, what):
    if not path:
        raise HyresError(f"缺少{what}参数")
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what}不存在: {path}")
    return path


def _channel_index(cube, index):
    index = 0 if index is None else index
    if not 0 <= index < len(cube):
        raise HyresError(f"通道索引 {index} 超出范围 (0-{len(cube) - 1})")
    return index


def _degradation_config(ctx):
    from degradation import DegradationConfig
    args = ctx.args
    ctx.override('scale', getattr(args, 'scale', None))
    ctx.override('noise_sigma', getattr(args, 'noise_sigma', None))
    ctx.override('noisy_fraction', getattr(args, 'noisy_fraction', None))
    ctx.override('snr_tau', getattr(args, 'snr_tau', None))
    ctx.override('blur_sigma', getattr(args, 'blur_sigma', None))
    return DegradationConfig.from_settings(ctx.settings, seed=args.seed)


def _training_config(ctx):
    from restorer import TrainingConfig
    args = ctx.args
    ctx.override('epochs', getattr(args, 'epochs', None))
    ctx.override('batch_size', getattr(args, 'batch', None))
    ctx.override('patch_size', getattr(args, 'patch', None))
    ctx.override('loss_mode', getattr(args, 'loss', None))
    ctx.override('adv_weight', getattr(args, 'adv_weight', None))
    for key in ('learning_rate', 'adam_beta1', 'adam_beta2', 'alpha_frc', 'beta_pixel', 'kernel_size'):
        ctx.override(key, None)
    return TrainingConfig.from_settings(ctx.settings, seed=args.seed)


# ---------------------------------------------------------------- 子命令

def cmd_import(ctx):
    """导入PGM目录为.hyrs容器"""
    from cube_io import CubeManifest, import_channels, write_cube
    args = ctx.args
    if not args.in_path or not os.path.isdir(args.in_path):
        raise FileNotFoundError(f"输入目录不存在: {args.in_path}")
    labels = _require_file(args.labels, '标签文件')
    pixel_size = 1.0 if args.pixel_size is None else args.pixel_size
    manifest = CubeManifest.from_directory(args.in_path, labels, pixel_size)
    cube = import_channels(manifest)
    write_cube(cube, args.out)
    ctx.record_input('directory', args.in_path)
    ctx.record_input('labels', labels)
    ctx.record_output('cube', args.out)
    ctx.parameters['pixel_size_um'] = pixel_size
    print(f"已导入 {len(cube)} 个通道 ({cube.height}x{cube.width}) -> {args.out}")
    return args.out


def cmd_info(ctx):
    """打印立方体信息，或列出最近的运行记录"""
    from cube_io import describe_cube, read_cube
    args = ctx.args
    if args.recent < 0:
        raise HyresError(f"--recent ({args.recent}) 不能为负")
    if args.recent:
        for record in RunHistory().get_recent(args.recent):
            print(f"{record['timestamp']}  {record['subcommand']}  seed={record['seed']}  "
                  f"exit={record['exit_code']}  {record['manifest'] or '-'}")
        if not args.in_path:
            return None
    path = _require_file(args.in_path, '输入文件')
    cube = read_cube(path)
    info = describe_cube(cube, path)
    ctx.record_input('cube', path)
    for key, value in info.items():
        print(f"{key}: {value}")
    if args.out:
        with open(args.out, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(info, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.write('\n')
        ctx.record_output('info', args.out)
        return args.out
    return None


def cmd_phantom(ctx):
    """生成合成立方体"""
    from cube_io import write_cube
    from phantoms import synthetic_cube
    args = ctx.args
    pixel_size = 25.0 if args.pixel_size is None else args.pixel_size
    cube = synthetic_cube(args.channels, args.size, seed=args.seed, pixel_size_um=pixel_size,
                          background_fraction=args.background_fraction)
    write_cube(cube, args.out)
    ctx.parameters.update({'channels': args.channels, 'size': args.size, 'pixel_size_um': pixel_size,
                           'background_fraction': args.background_fraction})
    ctx.record_output('cube', args.out)
    print(f"已生成合成立方体 {len(cube)}x{cube.height}x{cube.width} -> {args.out}")
    return args.out


def cmd_degrade(ctx):
    """生成LR立方体"""
    from cube_io import read_cube, write_cube
    from degradation import degrade_cube
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    dcfg = _degradation_config(ctx)
    _, lr = degrade_cube(read_cube(path), dcfg, ctx.show_progress)
    write_cube(lr, args.out)
    ctx.record_input('cube', path)
    ctx.record_output('cube', args.out)
    print(f"退化完成: {len(lr)} 个通道 {lr.height}x{lr.width}, 像素 {lr.pixel_size_um:g} um -> {args.out}")
    return args.out


def cmd_train(ctx):
    """训练复原器"""
    from cube_io import read_cube
    from degradation import make_training_pairs
    from restorer import train_restorer, write_loss_trace, write_model
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    dcfg = _degradation_config(ctx)
    tcfg = _training_config(ctx)
    pairs = make_training_pairs(read_cube(path), dcfg, tcfg, ctx.show_progress)
    model = train_restorer(pairs, tcfg, ctx.show_progress)
    write_model(model, args.out)
    trace_path = args.out + '.loss.csv'
    write_loss_trace(model, trace_path)
    ctx.record_input('cube', path)
    ctx.record_output('model', args.out)
    ctx.record_output('loss_trace', trace_path)
    if len(model.epoch_losses) >= 2:
        from svg_plot import emit_curve_svg
        svg_path = args.out + '.loss.svg'
        emit_curve_svg([(i + 1, losses[0]) for i, losses in enumerate(model.epoch_losses)],
                       'epoch', 'loss', svg_path)
        ctx.record_output('loss_svg', svg_path)
    print(f"训练完成: {len(pairs)} 个图块对, {tcfg.epochs} 轮, 最终损失 {model.final_loss:.6g} -> {args.out}")
    return args.out


def cmd_restore(ctx):
    """用模型复原LR立方体"""
    from cube_io import read_cube, write_cube
    from restorer import apply_restorer, read_model
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    model_path = _require_file(args.model, '模型文件')
    workers = ctx.override('workers', None)
    restored = apply_restorer(read_model(model_path), read_cube(path), workers)
    write_cube(restored, args.out)
    ctx.record_input('cube', path)
    ctx.record_input('model', model_path)
    ctx.record_output('cube', args.out)
    print(f"复原完成: {len(restored)} 个通道 {restored.height}x{restored.width}, "
          f"像素 {restored.pixel_size_um:g} um -> {args.out}")
    return args.out


def cmd_frc(ctx):
    """FRC曲线与分辨率"""
    from cube_io import read_cube
    from frc import evaluate_cube_resolution, frc_curve, resolution_from_curve, single_image_frc, write_curve_csv
    from svg_plot import emit_curve_svg
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    cube = read_cube(path)
    ctx.record_input('cube', path)
    threshold = ctx.override('frc_threshold', args.threshold)
    pixel_size = cube.pixel_size_um if args.pixel_size is None else args.pixel_size

    if args.single and args.channel is None and not args.ref:
        import csv
        workers = ctx.override('workers', None)
        estimates, summary = evaluate_cube_resolution(cube.replace(pixel_size_um=pixel_size), threshold, workers)
        with open(args.out, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['channel', 'mz', 'resolution_um', 'nyquist_limited'])
            for index, estimate in enumerate(estimates):
                if estimate is None:
                    writer.writerow([index, '%.17g' % cube.labels[index], '', ''])
                else:
                    writer.writerow([index, '%.17g' % cube.labels[index], '%.17g' % estimate.resolution_um,
                                     str(estimate.nyquist_limited).lower()])
            f.write(f"# mean_um={float(summary['mean_um'])!r}\n# median_um={float(summary['median_um'])!r}\n")
        ctx.record_output('resolution', args.out)
        print(f"立方体分辨率: 平均 {summary['mean_um']:.4g} um, 中位数 {summary['median_um']:.4g} um -> {args.out}")
        return args.out

    index = _channel_index(cube, args.channel)
    ctx.parameters['channel'] = index
    if args.ref:
        ref_path = _require_file(args.ref, '参考文件')
        reference = read_cube(ref_path)
        ctx.record_input('ref', ref_path)
        curve = frc_curve(cube.channels[index], reference.channels[_channel_index(reference, index)], pixel_size)
    else:
        if not args.single:
            raise HyresError("frc需要 --single（单图像FRC）或 --ref（双图像FRC）")
        curve = single_image_frc(cube.channels[index], pixel_size)
    estimate = resolution_from_curve(curve, threshold)
    write_curve_csv(curve, estimate, args.out)
    ctx.record_output('curve', args.out)
    points = [(f, v) for f, v, d in zip(curve.frequencies, curve.values, curve.defined) if d]
    if len(points) >= 2:
        svg_path = os.path.splitext(args.out)[0] + '.svg'
        emit_curve_svg(points, 'spatial frequency (cycles/px)', 'FRC', svg_path,
                       title=f'channel {index}, m/z {cube.labels[index]:g}')
        ctx.record_output('curve_svg', svg_path)
    limited = '（受奈奎斯特限制）' if estimate.nyquist_limited else ''
    print(f"通道 {index} 分辨率: {estimate.resolution_um:.4g} um{limited} -> {args.out}")
    return args.out


def cmd_diffpsf(ctx):
    """差分PSF与高斯拟合"""
    from cube_io import read_cube
    from errors import FitError
    from psf_model import compare_deblur, difference_psf, fit_radial_gaussian, write_psf_csv
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    ref_path = _require_file(args.ref, '参考文件')
    blurred = read_cube(path)
    sharp = read_cube(ref_path)
    index = _channel_index(blurred, args.channel)
    epsilon = ctx.override('psf_epsilon', None)
    sigma_tol = ctx.override('psf_sigma_tol', None)
    psf = difference_psf(blurred.channels[index], sharp.channels[_channel_index(sharp, index)], epsilon)
    try:
        fit = fit_radial_gaussian(psf, sigma_tol)
    except FitError as e:
        logger.warning(f"差分PSF高斯拟合失败: {e}")
        fit = None
    write_psf_csv(psf, fit, args.out)
    ctx.record_input('cube', path)
    ctx.record_input('ref', ref_path)
    ctx.record_output('psf', args.out)
    ctx.parameters['channel'] = index
    if fit is None:
        print(f"差分PSF已写出（拟合失败） -> {args.out}")
    else:
        print(f"差分PSF: σ = {fit.sigma:.4g} px, FWHM = {fit.fwhm:.4g} px -> {args.out}")
    return args.out


def cmd_iqa(ctx):
    """无参考/全参考质量评估"""
    from cube_io import read_cube
    from iqa import BrisqueModel, IqaEvaluator, write_iqa_csv
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    cube = read_cube(path)
    ctx.record_input('cube', path)
    reference = None
    if args.ref:
        ref_path = _require_file(args.ref, '参考文件')
        reference = read_cube(ref_path)
        ctx.record_input('ref', ref_path)
    model_path = _require_file(args.model or ctx.config.brisque_model_path(), 'BRISQUE模型')
    ctx.record_input('brisque_model', model_path)
    workers = ctx.override('workers', None)
    report = IqaEvaluator(BrisqueModel.load(model_path), workers).evaluate(cube, reference)
    write_iqa_csv(report, args.out)
    ctx.record_output('iqa', args.out)
    summary = report.summary()
    print(f"质量评估: BRISQUE {summary['brisque']:.2f}, PIQE {summary['piqe']:.2f}, "
          f"CRISQUE {summary['crisque']:.2f} -> {args.out}")
    return args.out


def cmd_stats(ctx):
    """下游分析指标"""
    from analysis_metrics import (balanced_accuracy, confusion_rates, dice_mean, read_label_mask,
                                  read_scored_labels, roc_auc, select_top_intensity, spectrum_agreement,
                                  write_metrics_csv)
    args = ctx.args
    path = _require_file(args.in_path, '输入文件')
    ctx.record_input('in', path)
    ctx.parameters['kind'] = args.kind
    rows = []
    if args.kind == 'dice':
        ref_path = _require_file(args.ref, '参考掩码')
        ctx.record_input('ref', ref_path)
        a, b = read_label_mask(path), read_label_mask(ref_path)
        mean, per_class = dice_mean(a, b)
        rows.append(('dice_mean', mean, len(per_class)))
        rows.extend((f'dice_class_{c}', v, int(np.count_nonzero(a.labels == c) + np.count_nonzero(b.labels == c)))
                    for c, v in per_class.items())
    elif args.kind == 'spectrum':
        from cube_io import read_cube
        ref_path = _require_file(args.ref, '参考文件')
        ctx.record_input('ref', ref_path)
        a, b = read_cube(path), read_cube(ref_path)
        if a.labels != b.labels:
            raise ValidationError("两个立方体的m/z标签不一致")
        top = ctx.override('top_channels', args.top)
        a, indices = select_top_intensity(a, top)
        b = b.select(indices)
        rows.append(('spearman_mean_spectrum', spectrum_agreement(a, b), len(a)))
    else:
        data = read_scored_labels(path)
        ctx.parameters['cutoff'] = args.cutoff
        sensitivity, specificity = confusion_rates(data.scores >= args.cutoff, data.labels)
        rows.append(('roc_auc', roc_auc(data), data.scores.size))
        rows.append(('sensitivity', sensitivity, data.positives))
        rows.append(('specificity', specificity, data.negatives))
        rows.append(('balanced_accuracy', balanced_accuracy(sensitivity, specificity), data.scores.size))
    write_metrics_csv(rows, args.out)
    ctx.record_output('stats', args.out)
    for name, value, count in rows[:4]:
        print(f"{name}: {value:.6g} (n={count})")
    return args.out


def cmd_fit_brisque(ctx):
    """重新生成线性BRISQUE模型"""
    from iqa import fit_brisque_model
    args = ctx.args
    model = fit_brisque_model(seed=args.seed, size=args.size)
    model.save(args.out)
    ctx.parameters['size'] = args.size
    ctx.record_output('model', args.out)
    print(f"BRISQUE模型已生成 -> {args.out}")
    return args.out


def cmd_report(ctx):
    """
    合成体模上的完整流程：退化、训练、复原，并输出FRC、差分PSF与质量评估结果
    """
    import csv
    from cube_io import write_cube
    from degradation import bicubic_resize, degrade_cube, make_training_pairs
    from errors import FitError, UndefinedCurveError
    from frc import resolution_from_curve, single_image_frc
    from iqa import BrisqueModel, IqaEvaluator, write_iqa_csv
    from phantoms import synthetic_cube
    from psf_model import compare_deblur, difference_psf, fit_radial_gaussian, write_psf_csv
    from restorer import apply_restorer, train_restorer, write_loss_trace, write_model
    from svg_plot import emit_curve_svg

    args = ctx.args
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    if args.patch is None:
        args.patch = 16
    if args.blur_sigma is None:
        args.blur_sigma = 1.5
    dcfg = _degradation_config(ctx)
    tcfg = _training_config(ctx)
    threshold = ctx.override('frc_threshold', args.threshold)
    workers = ctx.override('workers', None)
    pixel_size = 25.0 if args.pixel_size is None else args.pixel_size
    ctx.parameters.update({'channels': args.channels, 'size': args.size, 'pixel_size_um': pixel_size})

    hr = synthetic_cube(args.channels, args.size, seed=args.seed, pixel_size_um=pixel_size)
    pairs = make_training_pairs(hr, dcfg, tcfg, ctx.show_progress)
    model = train_restorer(pairs, tcfg, ctx.show_progress)
    hr_cropped, lr = degrade_cube(hr, dcfg, ctx.show_progress)
    restored = apply_restorer(model, lr, workers)
    upsampled = lr.replace(channels=[bicubic_resize(ch, dcfg.scale, 'up') for ch in lr.channels],
                           pixel_size_um=lr.pixel_size_um / dcfg.scale)

    paths = {name: os.path.join(out_dir, name) for name in (
        'hr.hyrs', 'lr.hyrs', 'restored.hyrs', 'model.txt', 'loss.csv', 'loss.svg',
        'resolution.csv', 'psf.csv', 'iqa.csv')}
    write_cube(hr_cropped, paths['hr.hyrs'])
    write_cube(lr, paths['lr.hyrs'])
    write_cube(restored, paths['restored.hyrs'])
    write_model(model, paths['model.txt'])
    write_loss_trace(model, paths['loss.csv'])
    if len(model.epoch_losses) >= 2:
        emit_curve_svg([(i + 1, losses[0]) for i, losses in enumerate(model.epoch_losses)],
                       'epoch', 'loss', paths['loss.svg'])
    else:
        paths.pop('loss.svg')

    # 单图像FRC：双三次上采样 vs 复原
    def resolution(image):
        try:
            return resolution_from_curve(single_image_frc(image, restored.pixel_size_um), threshold).resolution_um
        except UndefinedCurveError:
            return float('nan')

    with open(paths['resolution.csv'], 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['channel', 'mz', 'bicubic_um', 'restored_um'])
        ratios = []
        for index in range(len(lr)):
            base = resolution(upsampled.channels[index])
            rest = resolution(restored.channels[index])
            ratios.append(base / rest)
            writer.writerow([index, '%.17g' % lr.labels[index], '%.17g' % base, '%.17g' % rest])

    epsilon = ctx.override('psf_epsilon', None)
    sigma_tol = ctx.override('psf_sigma_tol', None)
    psf = difference_psf(upsampled.channels[0], restored.channels[0], epsilon)
    try:
        fit = fit_radial_gaussian(psf, sigma_tol)
    except FitError as e:
        logger.warning(f"差分PSF高斯拟合失败: {e}")
        fit = None
    write_psf_csv(psf, fit, paths['psf.csv'])

    # 以HR为参考比较去模糊强度
    try:
        deblur = compare_deblur(restored.channels[0], hr_cropped.channels[0], upsampled.channels[0],
                                epsilon, sigma_tol)
    except FitError as e:
        logger.warning(f"去模糊比较失败: {e}")
        deblur = None
    with open(paths['psf.csv'], 'a', encoding='utf-8', newline='\n') as f:
        if deblur is None:
            f.write("# deblur_vs_hr=failed\n")
        else:
            f.write(f"# deblur_vs_hr fwhm_restored_px={deblur.candidate_fit.fwhm!r} "
                    f"fwhm_hr_px={deblur.reference_fit.fwhm!r} ratio={deblur.ratio!r}\n")

    brisque = BrisqueModel.load(args.model or ctx.config.brisque_model_path())
    report = IqaEvaluator(brisque, workers).evaluate(restored, hr_cropped)
    write_iqa_csv(report, paths['iqa.csv'])

    for name, path in paths.items():
        ctx.record_output(name, path)
    summary = report.summary()
    print(f"报告目录: {out_dir}")
    print(f"训练损失: {model.epoch_losses[0][0]:.6g} -> {model.final_loss:.6g}" if model.epoch_losses
          else "训练轮数为0")
    print(f"FRC分辨率提升（双三次/复原）中位数: {float(np.nanmedian(ratios)):.4g}")
    if fit is not None:
        print(f"差分PSF FWHM: {fit.fwhm:.4g} px")
    if deblur is not None:
        print(f"去模糊强度（复原/HR，相对双三次）: {deblur.ratio:.4g}")
    print(f"CRISQUE中位数: {summary['crisque']:.2f}, PSNR中位数: {summary['psnr']:.2f} dB, "
          f"SSIM中位数: {summary['ssim']:.4f}")
    return out_dir


def cmd_replay(ctx):
    """按运行清单重新执行"""
    path = _require_file(ctx.args.in_path, '运行清单')
    manifest = RunManifest.load(path)
    if manifest.subcommand == 'replay':
        raise HyresError("运行清单不能指向replay自身")
    print(f"重放 {manifest.subcommand}: {' '.join(manifest.argv)}")
    code = run(manifest.argv)
    if code != 0:
        raise HyresError(f"重放失败，退出码 {code}")
    if os.path.isfile(path):
        replayed = RunManifest.load(path)
        if replayed.reproducible_dict() != manifest.reproducible_dict():
            logger.warning(f"重放后的运行清单与原清单不一致（已忽略时间戳与耗时）: {path}")
        else:
            logger.info("重放运行清单与原清单一致（已忽略时间戳与耗时）")
    return None


COMMANDS = {
    'import': cmd_import,
    'info': cmd_info,
    'phantom': cmd_phantom,
    'degrade': cmd_degrade,
    'train': cmd_train,
    'restore': cmd_restore,
    'frc': cmd_frc,
    'diffpsf': cmd_diffpsf,
    'iqa': cmd_iqa,
    'stats': cmd_stats,
    'report': cmd_report,
    'fit-brisque': cmd_fit_brisque,
    'replay': cmd_replay,
}


def build_parser():
    """构造命令行解析器"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='64位随机种子（默认0）')
    common.add_argument('--config', default=None, help='配置文件路径（默认 hyres.ini）')
    common.add_argument('--verbose', action='store_true', help='控制台输出调试日志')
    common.add_argument('--quiet', action='store_true', help='只输出警告与错误，关闭进度条')

    degrade_opts = argparse.ArgumentParser(add_help=False)
    degrade_opts.add_argument('--scale', type=int)
    degrade_opts.add_argument('--noise-sigma', type=float)
    degrade_opts.add_argument('--noisy-fraction', type=float)
    degrade_opts.add_argument('--snr-tau', type=float)
    degrade_opts.add_argument('--blur-sigma', type=float)

    train_opts = argparse.ArgumentParser(add_help=False)
    train_opts.add_argument('--epochs', type=int)
    train_opts.add_argument('--batch', type=int)
    train_opts.add_argument('--patch', type=int)
    train_opts.add_argument('--loss', choices=('frc', 'frc-sum'))
    train_opts.add_argument('--adv-weight', type=float)

    parser = argparse.ArgumentParser(prog='hyres', description='HyReS 高光谱图像复原与分辨率评估工具')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', metavar='<command>')
    sub.required = True

    p = sub.add_parser('import', parents=[common], help='导入PGM目录为.hyrs容器')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--labels', required=True)
    p.add_argument('--pixel-size', type=float)
    p.add_argument('--out', required=True)

    p = sub.add_parser('info', parents=[common], help='显示立方体信息')
    p.add_argument('--in', dest='in_path')
    p.add_argument('--recent', type=int, default=0, help='列出最近N条运行记录')
    p.add_argument('--out')

    p = sub.add_parser('phantom', parents=[common], help='生成合成立方体')
    p.add_argument('--out', required=True)
    p.add_argument('--channels', type=int, default=8)
    p.add_argument('--size', type=int, default=128)
    p.add_argument('--pixel-size', type=float)
    p.add_argument('--background-fraction', type=float, default=0.0)

    p = sub.add_parser('degrade', parents=[common, degrade_opts], help='生成LR立方体')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--out', required=True)

    p = sub.add_parser('train', parents=[common, degrade_opts, train_opts], help='训练复原器')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--out', required=True)

    p = sub.add_parser('restore', parents=[common], help='复原LR立方体')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--model', required=True)
    p.add_argument('--out', required=True)

    p = sub.add_parser('frc', parents=[common], help='FRC曲线与分辨率')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--ref')
    p.add_argument('--single', action='store_true')
    p.add_argument('--channel', type=int)
    p.add_argument('--threshold', type=float)
    p.add_argument('--pixel-size', type=float)
    p.add_argument('--out', required=True)

    p = sub.add_parser('diffpsf', parents=[common], help='差分PSF（--in 为更模糊的图像）')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--ref', required=True)
    p.add_argument('--channel', type=int)
    p.add_argument('--out', required=True)

    p = sub.add_parser('iqa', parents=[common], help='图像质量评估')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--ref')
    p.add_argument('--model')
    p.add_argument('--out', required=True)

    p = sub.add_parser('stats', parents=[common], help='Dice / 平均谱Spearman / ROC指标')
    p.add_argument('--kind', choices=('dice', 'spectrum', 'auc'), default='auc')
    p.add_argument('--in', dest='in_path', required=True)
    p.add_argument('--ref')
    p.add_argument('--cutoff', type=float, default=0.5, help='auc模式下二值化预测的分数阈值')
    p.add_argument('--top', type=int, help='spectrum模式下按总强度选取的通道数（默认取配置 top_channels）')
    p.add_argument('--out', required=True)

    p = sub.add_parser('report', parents=[common, degrade_opts, train_opts], help='合成体模上的完整评估流程')
    p.add_argument('--out', required=True, help='输出目录')
    p.add_argument('--channels', type=int, default=4)
    p.add_argument('--size', type=int, default=128)
    p.add_argument('--pixel-size', type=float)
    p.add_argument('--threshold', type=float)
    p.add_argument('--model', help='BRISQUE模型路径')

    p = sub.add_parser('fit-brisque', parents=[common], help='重新拟合线性BRISQUE模型')
    p.add_argument('--out', required=True)
    p.add_argument('--size', type=int, default=64)

    p = sub.add_parser('replay', parents=[common], help='按运行清单重新执行')
    p.add_argument('--in', dest='in_path', required=True)
    return parser


def run(argv=None):
    """
    执行一次命令

    Args:
        argv: 参数列表（不含程序名），None时使用sys.argv

    Returns:
        退出码：0成功，1运行/数据错误，2用法错误
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    setup_logging(args.verbose, args.quiet)
    if not 0 <= args.seed < 2 ** 64:
        parser.print_usage(sys.stderr)
        print(f"hyres: error: 随机种子 ({args.seed}) 必须是64位无符号整数", file=sys.stderr)
        return 2

    started = time.perf_counter()
    try:
        ctx = RunContext(args, argv)
        primary = COMMANDS[args.command](ctx)
    except (HyresError, OSError) as e:
        logger.error(f"{args.command} 失败: {e}")
        return 1
    except (ValueError, IndexError) as e:
        # 库外的数据解析错误
        logger.error(f"{args.command} 输入数据错误: {e}")
        logger.debug("详细错误信息:", exc_info=True)
        return 1

    if primary is not None and args.command != 'replay':
        manifest = RunManifest(
            subcommand=args.command,
            argv=argv,
            parameters=ctx.parameters,
            seed=args.seed,
            inputs=ctx.inputs,
            outputs=ctx.outputs,
            tool_version=__version__,
            duration_s=round(time.perf_counter() - started, 6),
            timestamp=datetime.datetime.now().isoformat(),
        )
        manifest_path = manifest.save(primary)
        RunHistory().add_record(manifest, manifest_path)
        logger.debug(f"运行清单已写出: {manifest_path}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
